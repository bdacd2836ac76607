"""Verification/identification protocols and performance indicators.

Scores are raw Euclidean distances: a probe is accepted at threshold
``theta`` iff its distance is ``<= theta``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import DegenerateRoc, EmptyScores, InsufficientSamples, MissingSession, ValidationError
from .features import FeatureVector, require_same_tag
from .fusion import RULES, TemplateSet, fuse_pairs
from .matching import identify, pairwise_distances

PROTOCOLS = ("holdout", "session_split")
CANONICAL_TEMPLATE_COUNTS = (2, 3, 4)


@dataclass(frozen=True)
class Sample:
    subject_id: str
    session: int
    sample_index: int
    vector: FeatureVector

    @property
    def key(self) -> tuple:
        return (self.subject_id, self.session, self.sample_index)


@dataclass(frozen=True)
class ProtocolConfig:
    protocol: str = "holdout"
    templates_per_subject: int = 4
    probes_per_subject: Optional[int] = None  # None: every remaining sample
    repetitions: int = 10
    fusion_enabled: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValidationError(f"unknown protocol {self.protocol!r}; choose from {', '.join(PROTOCOLS)}")
        if self.repetitions < 1:
            raise ValidationError("repetitions must be >= 1")
        if self.protocol == "holdout":
            if self.templates_per_subject < 1:
                raise ValidationError("templates_per_subject must be >= 1")
            if self.probes_per_subject is not None and self.probes_per_subject < 1:
                raise ValidationError("probes_per_subject must be >= 1")
            if self.fusion_enabled and self.templates_per_subject < 2:
                raise ValidationError("fusion needs at least 2 templates per subject")
            if self.fusion_enabled and self.probes_per_subject is not None and self.probes_per_subject < 2:
                raise ValidationError("fusion needs at least 2 probes per subject")

    @property
    def canonical(self) -> bool:
        """True for the standard holdout geometries (2, 3 or 4 templates)."""
        return self.protocol == "session_split" or self.templates_per_subject in CANONICAL_TEMPLATE_COUNTS

    @property
    def run_count(self) -> int:
        return 2 if self.protocol == "session_split" else self.repetitions


@dataclass
class Partition:
    """Template and probe vectors per subject for one run."""

    templates: dict[str, list[FeatureVector]]
    probes: dict[str, list[FeatureVector]]

    def subjects(self) -> list[str]:
        return sorted(self.templates)


@dataclass
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray
    run_id: int = 0
    # rank of the true subject for every probe (1 = correctly identified)
    true_ranks: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.genuine = np.asarray(self.genuine, dtype=np.float64)
        self.impostor = np.asarray(self.impostor, dtype=np.float64)


# ---------------------------------------------------------------------------
# partitioning


def group_by_subject(samples: Sequence[Sample]) -> dict[str, list[Sample]]:
    groups: dict[str, list[Sample]] = {}
    for s in samples:
        groups.setdefault(s.subject_id, []).append(s)
    for subject, rows in groups.items():
        rows.sort(key=lambda s: (s.session, s.sample_index))
        keys = {r.key for r in rows}
        if len(keys) != len(rows):
            raise ValidationError(f"duplicate (session, sample_index) rows for subject {subject}")
    return dict(sorted(groups.items()))


def run_generator(seed: int, run: int) -> np.random.Generator:
    """PCG64 stream for one run, seeded with ``seed + run``."""
    return np.random.Generator(np.random.PCG64(seed + run))


def check_dataset(groups: dict[str, list[Sample]], cfg: ProtocolConfig) -> None:
    """Reject datasets that cannot satisfy the protocol before any scoring."""
    if len(groups) < 2:
        raise InsufficientSamples("protocols need at least 2 subjects")
    if cfg.protocol == "holdout":
        need = cfg.templates_per_subject + (cfg.probes_per_subject or 1)
        if cfg.fusion_enabled and cfg.probes_per_subject is None:
            need = max(need, cfg.templates_per_subject + 2)
        for subject, rows in groups.items():
            if len(rows) < need:
                raise InsufficientSamples(f"subject {subject} has {len(rows)} samples, protocol needs {need}")
        return
    for subject, rows in groups.items():
        sessions = {r.session for r in rows}
        for sess in (1, 2):
            count = sum(r.session == sess for r in rows)
            if count == 0:
                raise MissingSession(f"subject {subject} has no samples in session {sess} (found {sorted(sessions)})")
            if cfg.fusion_enabled and count < 2:
                raise InsufficientSamples(f"subject {subject} needs >= 2 samples in session {sess} for fusion")


def make_partition(groups: dict[str, list[Sample]], cfg: ProtocolConfig, run: int) -> Partition:
    templates, probes = {}, {}
    if cfg.protocol == "holdout":
        rng = run_generator(cfg.rng_seed, run)
        t = cfg.templates_per_subject
        for subject, rows in groups.items():
            order = rng.permutation(len(rows))
            p_end = len(rows) if cfg.probes_per_subject is None else t + cfg.probes_per_subject
            templates[subject] = [rows[i].vector for i in order[:t]]
            probes[subject] = [rows[i].vector for i in order[t:p_end]]
    else:
        enrol, probe = (1, 2) if run == 0 else (2, 1)
        for subject, rows in groups.items():
            templates[subject] = [r.vector for r in rows if r.session == enrol]
            probes[subject] = [r.vector for r in rows if r.session == probe]
    return Partition(templates, probes)


def apply_fusion(part: Partition, rule: str = "mean") -> Partition:
    return Partition(
        {s: fuse_pairs(v, rule) for s, v in part.templates.items()},
        {s: fuse_pairs(v, rule) for s, v in part.probes.items()},
    )


# ---------------------------------------------------------------------------
# scoring


def subject_distances(part: Partition, budget: int = 1 << 22) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Min-over-templates distance of every probe to every subject.

    Returns ``(dist, owner, subjects)`` where ``dist`` is
    ``(n_probes, n_subjects)`` and ``owner[i]`` indexes the probe's subject.
    Probes are ordered subject-major in ascending subject order.
    """
    subjects = part.subjects()
    all_vectors = [v for s in subjects for v in part.templates[s]] + [v for s in subjects for v in part.probes[s]]
    require_same_tag(all_vectors)
    tmpl = np.stack([v.bins for s in subjects for v in part.templates[s]])
    starts = np.cumsum([0] + [len(part.templates[s]) for s in subjects[:-1]])
    probe_rows = [(i, v.bins) for i, s in enumerate(subjects) for v in part.probes[s]]
    if not probe_rows:
        raise InsufficientSamples("partition contains no probes")
    owner = np.array([i for i, _ in probe_rows])
    probes = np.stack([b for _, b in probe_rows])
    chunk = max(1, budget // (tmpl.shape[0] * tmpl.shape[1]))
    full = pairwise_distances(probes, tmpl, chunk=chunk)
    dist = np.minimum.reduceat(full, starts, axis=1)
    return dist, owner, subjects


def true_subject_ranks(dist: np.ndarray, owner: np.ndarray) -> np.ndarray:
    """1-based rank of the owner under (distance, subject index) ordering."""
    rows = np.arange(dist.shape[0])
    own = dist[rows, owner][:, None]
    cols = np.arange(dist.shape[1])[None, :]
    ahead = (dist < own) | ((dist == own) & (cols < owner[:, None]))
    return 1 + ahead.sum(axis=1)


def score_partition(part: Partition, run_id: int = 0) -> ScoreSet:
    """Genuine: each probe vs its own subject; impostor: vs every other subject."""
    dist, owner, _ = subject_distances(part)
    rows = np.arange(dist.shape[0])
    genuine = dist[rows, owner]
    mask = np.ones_like(dist, dtype=bool)
    mask[rows, owner] = False
    return ScoreSet(genuine, dist[mask], run_id, true_subject_ranks(dist, owner))


def run_protocol(
    samples: Sequence[Sample],
    cfg: ProtocolConfig,
    rule: str = "mean",
    workers: int = 1,
) -> list[ScoreSet]:
    """Score every run of a protocol over pre-extracted sample features.

    Holdout runs draw a fresh disjoint template/probe split per subject;
    session-split runs enrol on one session and probe with the other, then
    swap. With fusion enabled both sides are expanded into pairwise fusions.
    """
    if rule not in RULES:
        raise ValidationError(f"unknown fusion rule {rule!r}")
    groups = group_by_subject(samples)
    check_dataset(groups, cfg)

    def one_run(run: int) -> ScoreSet:
        part = make_partition(groups, cfg, run)
        if cfg.fusion_enabled:
            part = apply_fusion(part, rule)
        return score_partition(part, run)

    runs = range(cfg.run_count)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one_run, runs))
    return [one_run(r) for r in runs]


def rank1(part: Partition) -> float:
    """Percentage of probes whose nearest subject is their own."""
    gallery = [TemplateSet(s, part.templates[s]) for s in part.subjects()]
    if not gallery:
        raise InsufficientSamples("empty gallery")
    hits = total = 0
    for subject in part.subjects():
        for probe in part.probes[subject]:
            hits += identify(probe, gallery, 1)[0] == subject
            total += 1
    if total == 0:
        raise InsufficientSamples("partition contains no probes")
    return 100.0 * hits / total


def cmc(true_ranks: np.ndarray, max_rank: int) -> np.ndarray:
    """Identification rate (fraction) at ranks 1..max_rank."""
    ranks = np.asarray(true_ranks)
    return np.array([(ranks <= r).mean() for r in range(1, max_rank + 1)])


# ---------------------------------------------------------------------------
# ROC and indicators


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    far: float
    frr: float


@dataclass(frozen=True, eq=False)
class RocCurve:
    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    degenerate: bool = False

    def points(self) -> list[RocPoint]:
        return [RocPoint(float(t), float(a), float(r)) for t, a, r in zip(self.thresholds, self.far, self.frr)]

    def __len__(self) -> int:
        return self.thresholds.size


def roc(scores: ScoreSet) -> RocCurve:
    """FAR/FRR at every distinct score plus one sentinel on either side."""
    gen = np.sort(scores.genuine)
    imp = np.sort(scores.impostor)
    if gen.size == 0 or imp.size == 0:
        raise EmptyScores("ROC needs both genuine and impostor scores")
    distinct = np.unique(np.concatenate([gen, imp]))
    thresholds = np.concatenate([[distinct[0] - 1.0], distinct, [distinct[-1] + 1.0]])
    far = np.searchsorted(imp, thresholds, side="right") / imp.size
    frr = (gen.size - np.searchsorted(gen, thresholds, side="right")) / gen.size
    return RocCurve(thresholds, far, frr, degenerate=distinct.size == 1)


def eer(curve: RocCurve) -> tuple[float, float]:
    """Equal error rate in percent and the threshold where FAR meets FRR.

    FAR - FRR is non-decreasing in the threshold; the crossing is taken at
    the first point where it reaches zero, linearly interpolated from the
    previous point when it jumps over zero.
    """
    if curve.degenerate:
        raise DegenerateRoc("all scores are identical")
    diff = curve.far - curve.frr
    i = int(np.argmax(diff >= 0))
    if diff[i] == 0:
        return 100.0 * float(curve.far[i]), float(curve.thresholds[i])
    d0, d1 = diff[i - 1], diff[i]
    alpha = -d0 / (d1 - d0)
    rate = curve.far[i - 1] + alpha * (curve.far[i] - curve.far[i - 1])
    theta = curve.thresholds[i - 1] + alpha * (curve.thresholds[i] - curve.thresholds[i - 1])
    return 100.0 * float(rate), float(theta)


def min_hter(curve: RocCurve) -> float:
    if curve.degenerate:
        raise DegenerateRoc("all scores are identical")
    return 100.0 * float(np.min((curve.far + curve.frr) / 2.0))


class Interval(NamedTuple):
    mean: float
    half_width: float
    degenerate: bool = False


def confidence_interval(values: Sequence[float], level: float = 0.90) -> Interval:
    """Parametric (normal) interval: mean +- z * s / sqrt(n), s with n - 1."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise ValidationError("confidence interval needs at least one value")
    mean = float(vals.mean())
    if vals.size == 1:
        return Interval(mean, 0.0, True)
    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    s = float(vals.std(ddof=1))
    return Interval(mean, z * s / math.sqrt(vals.size))


@dataclass
class RunIndicators:
    run_id: int
    eer: float
    eer_threshold: float
    gar_at_eer: float
    min_hter: float
    rank1: float
    genuine_count: int
    impostor_count: int


def run_indicators(scores: ScoreSet) -> RunIndicators:
    curve = roc(scores)
    e, theta = eer(curve)
    r1 = 100.0 * float((scores.true_ranks == 1).mean()) if scores.true_ranks is not None else float("nan")
    return RunIndicators(
        run_id=scores.run_id,
        eer=e,
        eer_threshold=theta,
        gar_at_eer=100.0 - e,
        min_hter=min_hter(curve),
        rank1=r1,
        genuine_count=int(scores.genuine.size),
        impostor_count=int(scores.impostor.size),
    )


@dataclass
class IndicatorReport:
    eer: Interval
    gar_at_eer: Interval
    min_hter: Interval
    rank1: Interval
    runs: list[RunIndicators]
    level: float = 0.90

    def to_dict(self, digits: int = 10) -> dict:
        def iv(x: Interval) -> dict:
            return {"mean": round(x.mean, digits), "half_width": round(x.half_width, digits), "degenerate": x.degenerate}

        return {
            "confidence_level": self.level,
            "eer": iv(self.eer),
            "gar_at_eer": iv(self.gar_at_eer),
            "min_hter": iv(self.min_hter),
            "rank1": iv(self.rank1),
            "runs": [
                {
                    "run_id": r.run_id,
                    "eer": round(r.eer, digits),
                    "eer_threshold": round(r.eer_threshold, digits),
                    "gar_at_eer": round(r.gar_at_eer, digits),
                    "min_hter": round(r.min_hter, digits),
                    "rank1": round(r.rank1, digits),
                    "genuine_count": r.genuine_count,
                    "impostor_count": r.impostor_count,
                }
                for r in self.runs
            ],
        }


def summarize(score_sets: Sequence[ScoreSet], level: float = 0.90) -> IndicatorReport:
    runs = [run_indicators(s) for s in score_sets]
    return IndicatorReport(
        eer=confidence_interval([r.eer for r in runs], level),
        gar_at_eer=confidence_interval([r.gar_at_eer for r in runs], level),
        min_hter=confidence_interval([r.min_hter for r in runs], level),
        rank1=confidence_interval([r.rank1 for r in runs], level),
        runs=runs,
        level=level,
    )
