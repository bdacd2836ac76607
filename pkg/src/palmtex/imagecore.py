"""Gray image container, raster IO, circular sampling and valid convolution."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    KernelTooLarge,
    NotGrayConvertible,
    OutOfBounds,
    UnreadableFile,
    UnsupportedFormat,
    ValidationError,
)

# sample offsets closer than this to an integer are snapped onto the grid
GRID_SNAP = 1e-9


class PixelSite(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Immutable 8-bit single channel raster.

    ``data`` is a read-only ``uint8`` array of shape ``(height, width)``.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.size == 0:
            raise ValidationError(f"expected a non-empty 2-D raster, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.floating) and not np.all(arr == np.round(arr)):
                raise ValidationError("intensities must be integral")
            if arr.min() < 0 or arr.max() > 255:
                raise ValidationError("intensities must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        else:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_list(cls, width: int, height: int, values) -> "GrayImage":
        values = list(values)
        if width <= 0 or height <= 0 or len(values) != width * height:
            raise ValidationError("data length must equal width * height")
        return cls(np.asarray(values, dtype=np.int64).reshape(height, width))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def as_float(self) -> np.ndarray:
        return self.data.astype(np.float64)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self):
        return hash((self.data.shape, self.data.tobytes()))


# ---------------------------------------------------------------------------
# IO


def _pgm_tokens(buf: bytes, count: int):
    """Read ``count`` whitespace separated header tokens, skipping comments."""
    tokens, pos, n = [], 2, len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise UnreadableFile("truncated PGM header")
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates header from raster
    return tokens, pos + 1


def _read_pgm(buf: bytes) -> np.ndarray:
    try:
        (w, h, maxval), start = _pgm_tokens(buf, 3)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise UnreadableFile(f"malformed PGM header: {exc}") from exc
    if w <= 0 or h <= 0:
        raise UnreadableFile("PGM dimensions must be positive")
    if maxval > 255:
        raise NotGrayConvertible("16-bit PGM cannot be represented as 8-bit without rescaling")
    raster = buf[start : start + w * h]
    if len(raster) < w * h:
        raise UnreadableFile(f"truncated PGM raster: expected {w * h} bytes, found {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w)


def _read_with_pillow(path: Path) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "BMP", "PPM"):
                raise UnsupportedFormat(f"{path}: format {im.format} not supported")
            if im.mode in ("L", "1", "P", "RGB", "RGBA", "LA"):
                return np.array(im.convert("L"), dtype=np.uint8)
            raise NotGrayConvertible(f"{path}: mode {im.mode} has no 8-bit luminance mapping")
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"{path}: unrecognized raster format") from exc
    except OSError as exc:
        if isinstance(exc, (UnreadableFile, UnsupportedFormat)):
            raise
        raise UnreadableFile(f"{path}: {exc}") from exc


def load_image(path) -> GrayImage:
    """Load a PGM (P5), PNG or BMP file without any resampling."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc.strerror or exc}") from exc
    if buf[:2] == b"P5":
        return GrayImage(_read_pgm(buf))
    if buf[:2] in (b"P1", b"P2", b"P3", b"P4", b"P6"):
        raise UnsupportedFormat(f"{path}: only binary PGM (P5) is supported")
    return GrayImage(_read_with_pillow(path))


def encode_pgm(img: GrayImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.data.tobytes()


def save_pgm(img: GrayImage, path) -> None:
    tmp = Path(f"{path}.tmp")
    tmp.write_bytes(encode_pgm(img))
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# sampling


def circle_offsets(radius: float, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Offsets (dx, dy) of ``count`` points on a circle, counter-clockwise from +x.

    Image rows grow downwards, so a counter-clockwise turn decreases y.
    Offsets within ``GRID_SNAP`` of an integer are snapped onto it.
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    if radius <= 0:
        raise ValidationError("radius must be positive")
    angles = 2.0 * np.pi * np.arange(count) / count
    dx = radius * np.cos(angles)
    dy = -radius * np.sin(angles)
    for d in (dx, dy):
        near = np.abs(d - np.round(d)) < GRID_SNAP
        d[near] = np.round(d[near])
        d[d == 0.0] = 0.0  # drop negative zero
    return dx, dy


def bilinear_terms(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    """Return ``(a, dx, dy, b - a, c - a, a - b - c + d)`` for bilinear reads.

    ``a..d`` are the four grid values around each sample point. Splitting the
    interpolant into integer differences keeps constant patches exact.
    """
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    fx = xs - x0
    fy = ys - y0
    h, w = arr.shape
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    a = arr[y0, x0]
    b = arr[y0, x1]
    c = arr[y1, x0]
    d = arr[y1, x1]
    return a, fx, fy, b - a, c - a, a - b - c + d


def sample_circular(img: GrayImage, center: PixelSite, radius: float, count: int) -> np.ndarray:
    """Bilinearly interpolated intensities of ``count`` points on a circle."""
    cx, cy = center
    margin = math.ceil(radius)
    if not (margin <= cx < img.width - margin and margin <= cy < img.height - margin):
        raise OutOfBounds(f"circle of radius {radius} around ({cx}, {cy}) leaves the image")
    dx, dy = circle_offsets(radius, count)
    a, fx, fy, ba, ca, abcd = bilinear_terms(img.as_float(), cx + dx, cy + dy)
    return a + fx * ba + fy * ca + fx * fy * abcd


# ---------------------------------------------------------------------------
# convolution


def convolve_valid(img, kernel) -> np.ndarray:
    """Valid-region correlation of ``img`` with a square odd-sided kernel.

    ``out[y, x] = sum_ij kernel[i, j] * img[y + i, x + j]``; the kernel is
    applied as stored (no flip), so a filter bank file holds the exact
    weights multiplied against each window. Output is
    ``(height - k + 1, width - k + 1)``.
    """
    arr = img.as_float() if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] % 2 == 0:
        raise ValidationError(f"kernel must be square with odd side, got {kernel.shape}")
    k = kernel.shape[0]
    if k > min(arr.shape):
        raise KernelTooLarge(f"kernel side {k} exceeds image size {arr.shape[1]}x{arr.shape[0]}")
    windows = sliding_window_view(arr, (k, k))
    return np.einsum("hwij,ij->hw", windows, kernel)
