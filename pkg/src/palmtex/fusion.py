"""Multi-snapshot feature-level fusion."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import DegenerateZeroVector, TooFewVectors, ValidationError
from .features import FeatureVector, require_same_tag

RULES = ("mean", "sqrt", "product", "absdiff")


@dataclass(frozen=True)
class TemplateSet:
    subject_id: str
    vectors: tuple
    fused: bool = False

    def __post_init__(self):
        object.__setattr__(self, "vectors", tuple(self.vectors))
        if not self.vectors:
            raise ValidationError("a template set needs at least one vector")
        require_same_tag(self.vectors)

    @property
    def tag(self) -> str:
        return self.vectors[0].tag

    def matrix(self) -> np.ndarray:
        return np.stack([v.bins for v in self.vectors])


def combine(a: FeatureVector, b: FeatureVector, rule: str = "mean") -> FeatureVector:
    """Elementwise combination of two vectors, re-L1-normalized for non-mean rules."""
    tag = require_same_tag((a, b))
    if rule == "mean":
        return FeatureVector((a.bins + b.bins) / 2.0, tag)
    if rule == "sqrt":
        out = np.sqrt(a.bins * b.bins)
    elif rule == "product":
        out = a.bins * b.bins
    elif rule == "absdiff":
        out = np.abs(a.bins - b.bins)
    else:
        raise ValidationError(f"unknown fusion rule {rule!r}; choose from {', '.join(RULES)}")
    total = out.sum()
    if total == 0.0:
        raise DegenerateZeroVector(f"{rule} rule produced an all-zero vector")
    return FeatureVector(out / total, tag)


def fuse_probe(a: FeatureVector, b: FeatureVector) -> FeatureVector:
    """Average a pair of probe samples into one probe."""
    return combine(a, b, "mean")


def fuse_pairs(vectors: Sequence[FeatureVector], rule: str = "mean") -> list[FeatureVector]:
    """Fuse every unordered pair (i < j), in lexicographic order.

    n vectors give n * (n - 1) / 2 outputs.
    """
    if len(vectors) < 2:
        raise TooFewVectors(f"pairwise fusion needs at least 2 vectors, got {len(vectors)}")
    require_same_tag(vectors)
    return [combine(vectors[i], vectors[j], rule) for i, j in combinations(range(len(vectors)), 2)]


def fuse_template_set(templates: TemplateSet, rule: str = "mean") -> TemplateSet:
    return TemplateSet(templates.subject_id, fuse_pairs(templates.vectors, rule), fused=True)
