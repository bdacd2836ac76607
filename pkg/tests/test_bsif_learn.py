import warnings

import numpy as np
import pytest

from palmtex.bsif_learn import PatchMatrix, build_bank, fast_ica, learn_filter_bank, sample_patches, whiten
from palmtex.descriptors import FilterBank, bsif_encode
from palmtex.errors import ConvergenceWarning, DimensionMismatch, EmptyCorpus, ImageTooSmall, RankDeficient
from palmtex.imagecore import GrayImage

from conftest import gray


def mixed_sources(rng, k, n, kind="laplace"):
    if kind == "laplace":
        s = rng.laplace(size=(k, n))
    else:
        s = rng.uniform(-np.sqrt(3), np.sqrt(3), size=(k, n))
    a = rng.standard_normal((k, k))
    return s, a @ s


def best_correlations(recovered, sources):
    c = np.corrcoef(np.vstack([recovered, sources]))[: len(recovered), len(recovered) :]
    return np.abs(c).max(axis=0)


class TestSamplePatches:
    def test_constant_corpus(self):
        pm = sample_patches([gray(np.full((20, 20), 90))] * 3, 5, 200, seed=0)
        assert pm.data.shape == (25, 200)
        assert np.all(pm.data == 0)

    def test_side_one(self, rng):
        pm = sample_patches([gray(rng.integers(0, 256, (8, 8)))], 1, 50, seed=3)
        assert pm.dim == 1 and pm.count == 50
        assert np.all(pm.data == 0)  # a one-pixel patch minus its own mean

    def test_centering(self, rng):
        corpus = [gray(rng.integers(0, 256, (30, 40))) for _ in range(3)]
        pm = sample_patches(corpus, 7, 500, seed=1)
        assert np.max(np.abs(pm.data.mean(axis=0))) < 1e-9
        assert np.max(np.abs(pm.data.mean(axis=1))) < 1e-9

    def test_deterministic(self, rng):
        corpus = [gray(rng.integers(0, 256, (30, 30))) for _ in range(2)]
        a = sample_patches(corpus, 5, 300, seed=9)
        b = sample_patches(corpus, 5, 300, seed=9)
        assert np.array_equal(a.data, b.data)
        assert not np.array_equal(a.data, sample_patches(corpus, 5, 300, seed=10).data)

    def test_errors(self):
        with pytest.raises(EmptyCorpus):
            sample_patches([], 3, 10, 0)
        with pytest.raises(ImageTooSmall):
            sample_patches([gray(np.zeros((4, 4)))], 5, 10, 0)


class TestWhiten:
    def test_random_matrix_covariance(self, rng):
        data = rng.standard_normal((100, 400)) * rng.uniform(0.5, 5, (100, 1))
        w, z = whiten(data, 8)
        cov = z @ z.T / z.shape[1]
        assert np.max(np.abs(cov - np.eye(8))) < 1e-6
        assert np.all(np.diff(w.eigenvalues) <= 0)
        np.testing.assert_allclose(w.apply(data), z, atol=1e-10)

    def test_white_input_gives_rotation(self, rng):
        raw = rng.standard_normal((2, 5000))
        raw -= raw.mean(axis=1, keepdims=True)
        # make it exactly white
        c = raw @ raw.T / raw.shape[1]
        vals, vecs = np.linalg.eigh(c)
        white = (vecs / np.sqrt(vals)).T @ raw
        w, z = whiten(white, 2)
        assert np.max(np.abs(w.projection @ w.projection.T - np.eye(2))) < 1e-9
        assert np.max(np.abs(z @ z.T / z.shape[1] - np.eye(2))) < 1e-9

    def test_k1_dominant_axis(self, rng):
        axis = np.array([np.cos(0.4), np.sin(0.4)])
        other = np.array([-axis[1], axis[0]])
        data = np.outer(axis, 5 * rng.standard_normal(3000)) + np.outer(other, 0.5 * rng.standard_normal(3000))
        w, _ = whiten(data, 1)
        direction = w.projection[0] / np.linalg.norm(w.projection[0])
        centred = data - data.mean(axis=1, keepdims=True)
        oracle = np.linalg.eigh(centred @ centred.T / data.shape[1])[1][:, -1]
        assert abs(abs(direction @ oracle) - 1.0) < 1e-12
        assert abs(direction @ axis) > 0.99

    def test_rank_deficient(self, rng):
        data = np.outer(rng.standard_normal(4), rng.standard_normal(100))
        with pytest.raises(RankDeficient):
            whiten(data, 2)


class TestFastIca:
    def test_k1_unit_vector(self, rng):
        z = rng.standard_normal((1, 500))
        z = (z - z.mean()) / z.std()
        res = fast_ica(z, 1, seed=0)
        assert res.unmixing.shape == (1, 1) and abs(abs(res.unmixing[0, 0]) - 1.0) < 1e-12

    def test_two_uniform_sources_orthogonal_mixing(self, rng):
        s = rng.uniform(-np.sqrt(3), np.sqrt(3), (2, 5000))
        theta = 0.7
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        w, z = whiten(rot @ s, 2)
        res = fast_ica(z, 2, seed=4)
        assert res.converged
        assert np.all(best_correlations(res.unmixing @ z, s) > 0.95)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_laplacian_recovery(self, seed):
        r = np.random.default_rng(100 + seed)
        s, x = mixed_sources(r, 8, 20000)
        w, z = whiten(x, 8)
        res = fast_ica(z, 8, seed=seed)
        assert res.converged
        assert np.all(best_correlations(res.unmixing @ z, s) > 0.95)

    def test_rows_orthonormal(self, rng):
        _, x = mixed_sources(rng, 5, 4000, "uniform")
        _, z = whiten(x, 5)
        w = fast_ica(z, 5, seed=2).unmixing
        assert np.max(np.abs(w @ w.T - np.eye(5))) < 1e-8

    def test_deterministic(self, rng):
        _, x = mixed_sources(rng, 4, 3000)
        _, z = whiten(x, 4)
        assert np.array_equal(fast_ica(z, 4, seed=7).unmixing, fast_ica(z, 4, seed=7).unmixing)

    def test_non_convergence_warns(self, rng):
        _, x = mixed_sources(rng, 4, 3000)
        _, z = whiten(x, 4)
        with pytest.warns(ConvergenceWarning):
            res = fast_ica(z, 4, seed=0, max_iter=1, tol=1e-15)
        assert not res.converged and res.iterations == 1

    def test_shape_check(self, rng):
        with pytest.raises(DimensionMismatch):
            fast_ica(rng.standard_normal((3, 10)), 4, seed=0)


class TestBuildBank:
    def test_identity_unmixing(self, rng):
        corpus = [gray(rng.integers(0, 256, (24, 24))) for _ in range(2)]
        w, _ = whiten(sample_patches(corpus, 5, 800, seed=0), 4)
        bank = build_bank(w, np.eye(4), 5)
        np.testing.assert_array_equal(bank.kernels, w.projection.reshape(4, 5, 5))

    def test_dimension_mismatch(self, rng):
        corpus = [gray(rng.integers(0, 256, (24, 24)))]
        w, _ = whiten(sample_patches(corpus, 5, 800, seed=0), 4)
        with pytest.raises(DimensionMismatch):
            build_bank(w, np.eye(3), 5)
        with pytest.raises(DimensionMismatch):
            build_bank(w, np.eye(4), 7)


class TestLearnFilterBank:
    def test_learned_bank(self, learned_bank):
        assert learned_bank.count == 8 and learned_bank.side == 17
        means = np.abs(learned_bank.kernels.mean(axis=(1, 2)))
        assert np.all(means < 1e-6)
        codes = bsif_encode(GrayImage(np.full((40, 40), 128)), learned_bank)
        assert np.all(codes.codes == 0)

    def test_text_roundtrip(self, learned_bank):
        back = FilterBank.from_text(learned_bank.to_text())
        assert np.max(np.abs(back.kernels - learned_bank.kernels)) <= 1e-12

    def test_deterministic_file(self, rng, tmp_path):
        corpus = [gray(rng.integers(0, 256, (40, 40))) for _ in range(3)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            a, _ = learn_filter_bank(corpus, k=4, side=7, seed=3, count=2000)
            b, _ = learn_filter_bank(corpus, k=4, side=7, seed=3, count=2000)
        assert a.to_text() == b.to_text()

    def test_patch_matrix_accepted(self, rng):
        pm = PatchMatrix(rng.standard_normal((9, 300)), 3)
        w, z = whiten(pm, 3)
        assert z.shape == (3, 300)
