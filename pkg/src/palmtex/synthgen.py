"""Deterministic synthetic vein-texture datasets.

Each subject owns a handful of smooth dark curves; every sample re-renders
them under a small random affine jitter, control-point wobble, illumination
gradient and sensor noise. Session 2 adds one fixed global perturbation,
scaled by the jitter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import gaussian_filter

from .dataset import ManifestRow, write_manifest
from .errors import IoFailure, ValidationError
from .imagecore import GrayImage, encode_pgm

BACKGROUND = 150.0
# session-2 perturbation per unit of jitter: rotation (deg), shift (px), contrast loss
SESSION2_ROTATION = 2.0
SESSION2_SHIFT = (1.5, -1.0)
SESSION2_CONTRAST_LOSS = 0.1


@dataclass(frozen=True)
class SynthConfig:
    subjects: int = 20
    samples_per_subject: int = 12
    sessions: int = 2
    image_side: int = 128
    seed: int = 0
    noise_sigma: float = 6.0
    jitter: float = 1.0
    band: str | None = None

    def __post_init__(self):
        if self.subjects < 2:
            raise ValidationError("need at least 2 subjects")
        if self.samples_per_subject < 3:
            raise ValidationError("need at least 3 samples per subject")
        if self.sessions not in (1, 2):
            raise ValidationError("sessions must be 1 or 2")
        if self.image_side < 64:
            raise ValidationError("image_side must be >= 64")
        if self.noise_sigma < 0 or self.jitter < 0:
            raise ValidationError("noise_sigma and jitter must be non-negative")

    def session_of(self, index: int) -> int:
        if self.sessions == 1:
            return 1
        return 1 if index < math.ceil(self.samples_per_subject / 2) else 2


@dataclass(frozen=True)
class _Curve:
    points: np.ndarray  # (n, 2) control points, (x, y)
    width: float
    depth: float


def subject_id(index: int) -> str:
    return f"S{index + 1:03d}"


def _subject_curves(cfg: SynthConfig, subject: int) -> list[_Curve]:
    rng = np.random.default_rng([cfg.seed, subject, 0])
    side = cfg.image_side
    curves = []
    for _ in range(int(rng.integers(3, 7))):
        n_ctrl = int(rng.integers(4, 7))
        start = rng.uniform(0.1 * side, 0.9 * side, size=2)
        heading = rng.uniform(0, 2 * np.pi)
        step = side * rng.uniform(0.12, 0.22)
        pts = [start]
        for _ in range(n_ctrl - 1):
            heading += rng.normal(0, 0.6)
            pts.append(pts[-1] + step * np.array([np.cos(heading), np.sin(heading)]))
        curves.append(_Curve(np.array(pts), width=rng.uniform(1.2, 3.0), depth=rng.uniform(35.0, 75.0)))
    return curves


def _affine(points: np.ndarray, angle_deg: float, shift, scale: float, centre: float) -> np.ndarray:
    a = math.radians(angle_deg)
    rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    return (points - centre) @ rot.T * scale + centre + np.asarray(shift)


def _render_curve(points: np.ndarray, width: float, side: int) -> np.ndarray:
    """Unit-peak line profile of the cubic spline through ``points``."""
    t = np.arange(len(points), dtype=np.float64)
    spline = CubicSpline(t, points, axis=0)
    dense = spline(np.linspace(0, t[-1], 40 * len(points)))
    seg = np.linalg.norm(np.diff(dense, axis=0), axis=1)
    mids = 0.5 * (dense[1:] + dense[:-1])
    canvas = np.zeros((side, side))
    x0 = np.floor(mids[:, 0]).astype(np.intp)
    y0 = np.floor(mids[:, 1]).astype(np.intp)
    fx = mids[:, 0] - x0
    fy = mids[:, 1] - y0
    for dx, dy, wgt in ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)), (0, 1, (1 - fx) * fy), (1, 1, fx * fy)):
        xs, ys = x0 + dx, y0 + dy
        ok = (xs >= 0) & (xs < side) & (ys >= 0) & (ys < side)
        np.add.at(canvas, (ys[ok], xs[ok]), (wgt * seg)[ok])
    return gaussian_filter(canvas, width, mode="constant") * (math.sqrt(2 * np.pi) * width)


def render_sample(cfg: SynthConfig, subject: int, index: int) -> GrayImage:
    """Render one sample image; a pure function of (cfg, subject, index)."""
    side = cfg.image_side
    centre = (side - 1) / 2.0
    rng = np.random.default_rng([cfg.seed, subject, 1, index])
    j = cfg.jitter
    angle = rng.normal(0, 3.0 * j)
    shift = rng.normal(0, 2.0 * j, size=2)
    scale = 1.0 + rng.normal(0, 0.02 * j)
    session2 = cfg.session_of(index) == 2

    img = np.full((side, side), BACKGROUND)
    for curve in _subject_curves(cfg, subject):
        pts = curve.points + rng.normal(0, 0.8 * j, size=curve.points.shape)
        pts = _affine(pts, angle, shift, scale, centre)
        if session2:
            pts = _affine(pts, SESSION2_ROTATION * j, np.multiply(SESSION2_SHIFT, j), 1.0, centre)
        img -= curve.depth * _render_curve(pts, curve.width, side)

    grad_dir = rng.uniform(0, 2 * np.pi)
    grad_mag = rng.normal(0, 10.0) if j > 0 else 0.0
    yy, xx = np.mgrid[0:side, 0:side] / side - 0.5
    img += grad_mag * (xx * math.cos(grad_dir) + yy * math.sin(grad_dir))
    if session2:
        img = BACKGROUND + (1.0 - SESSION2_CONTRAST_LOSS * j) * (img - BACKGROUND)
    if cfg.noise_sigma > 0:
        img += rng.normal(0, cfg.noise_sigma, size=img.shape)
    return GrayImage(np.clip(np.rint(img), 0, 255).astype(np.uint8))


def iter_samples(cfg: SynthConfig) -> Iterator[tuple[str, int, int, GrayImage]]:
    """Yield ``(subject_id, session, sample_index, image)`` in manifest order."""
    for s in range(cfg.subjects):
        for i in range(cfg.samples_per_subject):
            yield subject_id(s), cfg.session_of(i), i, render_sample(cfg, s, i)


def generate(cfg: SynthConfig, out_dir) -> list[ManifestRow]:
    """Write PGM images plus ``manifest.csv`` under ``out_dir``."""
    out = Path(out_dir)
    rows = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for sid, session, index, img in iter_samples(cfg):
            folder = out / sid
            folder.mkdir(exist_ok=True)
            path = folder / f"{sid}_s{session}_{index:02d}.pgm"
            path.write_bytes(encode_pgm(img))
            rows.append(ManifestRow(sid, session, index, path, cfg.band))
        write_manifest(rows, out / "manifest.csv")
    except OSError as exc:
        raise IoFailure(f"cannot write synthetic dataset to {out}: {exc}") from exc
    return rows
