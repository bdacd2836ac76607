"""Euclidean matching, verification and closed-set identification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyGallery, EmptyTemplateSet, TagMismatch, ValidationError
from .features import FeatureVector, require_same_tag
from .fusion import TemplateSet


@dataclass(frozen=True)
class MatchScore:
    distance: float
    claimed_subject: str
    probe_id: str
    genuine: bool


def euclidean(a: FeatureVector, b: FeatureVector) -> float:
    require_same_tag((a, b))
    if len(a) != len(b):
        raise ValidationError("feature vectors differ in length")
    diff = a.bins - b.bins
    return float(np.sqrt(np.dot(diff, diff)))


def pairwise_distances(probes: np.ndarray, templates: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Euclidean distances between rows of ``probes`` and rows of ``templates``.

    Uses explicit differences rather than the Gram expansion so results do
    not depend on BLAS blocking or thread count.
    """
    probes = np.atleast_2d(probes)
    templates = np.atleast_2d(templates)
    out = np.empty((probes.shape[0], templates.shape[0]))
    for start in range(0, probes.shape[0], chunk):
        diff = probes[start : start + chunk, None, :] - templates[None, :, :]
        out[start : start + chunk] = np.sqrt(np.einsum("ptb,ptb->pt", diff, diff))
    return out


def verify(probe: FeatureVector, templates: TemplateSet) -> float:
    """Distance from a probe to a subject: the minimum over its templates."""
    if templates is None or not templates.vectors:
        raise EmptyTemplateSet("cannot verify against an empty template set")
    if probe.tag != templates.tag:
        raise TagMismatch(f"probe tag {probe.tag!r} does not match templates {templates.tag!r}")
    return float(pairwise_distances(probe.bins, templates.matrix()).min())


def rank_subjects(subject_ids: Sequence[str], distances: Sequence[float]) -> list[str]:
    """Order subjects by ascending distance, ties by ascending identifier."""
    return [s for _, s in sorted(zip(distances, subject_ids))]


def identify(probe: FeatureVector, gallery: Sequence[TemplateSet], rank: int = 1) -> list[str]:
    """Top-``rank`` subjects for a probe, each scored by its best template."""
    if not gallery:
        raise EmptyGallery("identification needs a non-empty gallery")
    if rank < 1:
        raise ValidationError("rank must be >= 1")
    best: dict[str, float] = {}
    for t in gallery:
        d = verify(probe, t)
        best[t.subject_id] = min(d, best.get(t.subject_id, d))
    return rank_subjects(list(best), list(best.values()))[:rank]
