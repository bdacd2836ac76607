import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from palmtex.errors import EmptyGallery, EmptyTemplateSet, TagMismatch
from palmtex.features import FeatureVector
from palmtex.fusion import TemplateSet
from palmtex.matching import euclidean, identify, pairwise_distances, verify

import oracles


def fv(bins, tag="t"):
    return FeatureVector(bins, tag)


def naive_distance(a, b):
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


class TestEuclidean:
    def test_self_zero(self, rng):
        v = fv(rng.random(256))
        assert euclidean(v, v) == 0.0

    def test_deltas(self):
        a, b = np.zeros(256), np.zeros(256)
        a[0] = b[1] = 1.0
        assert euclidean(fv(a), fv(b)) == math.sqrt(2)

    def test_matches_naive(self, rng):
        for _ in range(20):
            a, b = rng.random(256), rng.random(256)
            assert abs(euclidean(fv(a), fv(b)) - naive_distance(a.tolist(), b.tolist())) <= 1e-12

    def test_tag_mismatch(self):
        with pytest.raises(TagMismatch):
            euclidean(fv([1.0]), fv([1.0], "other"))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_triangle_and_symmetry(self, seed):
        r = np.random.default_rng(seed)
        a, b, c = (fv(r.dirichlet(np.ones(32))) for _ in range(3))
        assert euclidean(a, b) == euclidean(b, a)
        assert euclidean(a, c) <= euclidean(a, b) + euclidean(b, c) + 1e-9

    def test_pairwise_matches_scalar(self, rng):
        p, t = rng.random((7, 40)), rng.random((300, 40))
        d = pairwise_distances(p, t, chunk=3)
        for i in range(7):
            for j in (0, 150, 299):
                assert abs(d[i, j] - naive_distance(p[i], t[j])) <= 1e-12


class TestVerify:
    def test_probe_equals_template(self, rng):
        vs = [fv(rng.random(16)) for _ in range(3)]
        assert verify(vs[1], TemplateSet("S", vs)) == 0.0

    def test_single_template(self, rng):
        a, b = fv(rng.random(16)), fv(rng.random(16))
        assert verify(a, TemplateSet("S", [b])) == euclidean(a, b)

    def test_brute_force_min(self, rng):
        vs = [fv(rng.random(16)) for _ in range(4)]
        p = fv(rng.random(16))
        assert verify(p, TemplateSet("S", vs)) == min(euclidean(p, v) for v in vs)

    def test_more_templates_never_worse(self, rng):
        vs = [fv(rng.random(16)) for _ in range(6)]
        p = fv(rng.random(16))
        for k in range(1, 6):
            assert verify(p, TemplateSet("S", vs[: k + 1])) <= verify(p, TemplateSet("S", vs[:k]))

    def test_errors(self, rng):
        with pytest.raises(EmptyTemplateSet):
            verify(fv([1.0]), None)
        with pytest.raises(TagMismatch):
            verify(fv([1.0], "a"), TemplateSet("S", [fv([1.0], "b")]))


class TestIdentify:
    def gallery(self, rng, n=10, t=3, dim=16):
        return [TemplateSet(f"S{i:03d}", [fv(rng.random(dim)) for _ in range(t)]) for i in range(n)]

    def test_identical_probe_rank1(self, rng):
        g = self.gallery(rng)
        assert identify(g[4].vectors[2], g) == [g[4].subject_id]

    def test_tie_lower_id_first(self):
        g = [TemplateSet("B", [fv([0.0, 1.0])]), TemplateSet("A", [fv([1.0, 0.0])])]
        assert identify(fv([0.0, 0.0]), g, rank=2) == ["A", "B"]

    def test_matches_sort_oracle(self, rng):
        g = self.gallery(rng)
        p = fv(rng.random(16))
        want = oracles.nearest_subjects(p.bins.tolist(), {t.subject_id: [v.bins.tolist() for v in t.vectors] for t in g})
        assert identify(p, g, rank=10) == want

    def test_permutation_invariant(self, rng):
        g = self.gallery(rng)
        p = fv(rng.random(16))
        want = identify(p, g, rank=10)
        for _ in range(5):
            order = rng.permutation(len(g))
            assert identify(p, [g[i] for i in order], rank=10) == want

    def test_empty(self):
        with pytest.raises(EmptyGallery):
            identify(fv([1.0]), [])
