"""Local dense descriptors: LBP, LTP, LDP, LPQ and BSIF code rasters.

Every encoder emits codes only where its full support fits inside the image
(no padding). Bit 0 is the least significant bit and corresponds to sample
0, Kirsch direction 0, LPQ component 0 or filter 0.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ImageTooSmall, MixedKernelSizes, ValidationError
from .imagecore import GrayImage, bilinear_terms, circle_offsets

# interpolated neighbours within this distance of the centre count as ties
TIE_TOL = 1e-9

# (dx, dy) of the 8-neighbourhood, counter-clockwise from east; rows grow down
SQUARE_OFFSETS = ((1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1))

KIRSCH_MASKS = np.array(
    [
        [[-3, -3, 5], [-3, 0, 5], [-3, -3, 5]],  # 0  east
        [[-3, 5, 5], [-3, 0, 5], [-3, -3, -3]],  # 1  north-east
        [[5, 5, 5], [-3, 0, -3], [-3, -3, -3]],  # 2  north
        [[5, 5, -3], [5, 0, -3], [-3, -3, -3]],  # 3  north-west
        [[5, -3, -3], [5, 0, -3], [5, -3, -3]],  # 4  west
        [[-3, -3, -3], [5, 0, -3], [5, 5, -3]],  # 5  south-west
        [[-3, -3, -3], [-3, 0, -3], [5, 5, 5]],  # 6  south
        [[-3, -3, -3], [-3, 0, 5], [-3, 5, 5]],  # 7  south-east
    ],
    dtype=np.int64,
)

BIT_WEIGHTS = (1 << np.arange(8)).astype(np.int64)


@dataclass(frozen=True, eq=False)
class CodeImage:
    """Row-major raster of per-pixel codes over a descriptor's valid region."""

    codes: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.codes)
        if arr.ndim != 2:
            raise ValidationError("code raster must be 2-D")
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValidationError("codes must lie in [0, 255]")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "codes", arr)

    @property
    def width(self) -> int:
        return self.codes.shape[1]

    @property
    def height(self) -> int:
        return self.codes.shape[0]

    def __eq__(self, other):
        if not isinstance(other, CodeImage):
            return NotImplemented
        return self.codes.shape == other.codes.shape and bool(np.array_equal(self.codes, other.codes))

    __hash__ = None


@dataclass(frozen=True)
class LbpParams:
    neighbors: int = 8
    radius: float = 1.0
    topology: str = "square3x3"

    def __post_init__(self):
        if self.topology not in ("circle", "square3x3"):
            raise ValidationError(f"unknown LBP topology {self.topology!r}")
        if not 4 <= self.neighbors <= 8:
            raise ValidationError("LBP needs 4..8 neighbours for 8-bit codes")
        if self.radius <= 0:
            raise ValidationError("LBP radius must be positive")
        if self.topology == "square3x3" and (self.neighbors != 8 or self.radius != 1.0):
            raise ValidationError("square3x3 topology is fixed at P=8, R=1")

    @property
    def margin(self) -> int:
        return 1 if self.topology == "square3x3" else math.ceil(self.radius)


@dataclass(frozen=True)
class LtpParams:
    threshold: float = 5.0
    split_mode: str = "concat_upper_lower"

    def __post_init__(self):
        if self.threshold < 0:
            raise ValidationError("LTP threshold must be non-negative")
        if self.split_mode not in ("upper_only", "concat_upper_lower"):
            raise ValidationError(f"unknown LTP split mode {self.split_mode!r}")


@dataclass(frozen=True)
class LdpParams:
    active_bits: int = 3

    def __post_init__(self):
        if not 1 <= self.active_bits <= 8:
            raise ValidationError("LDP active bits must be in 1..8")


@dataclass(frozen=True)
class LpqParams:
    window: int = 7

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValidationError("LPQ window must be an odd integer >= 3")


@dataclass(frozen=True, eq=False)
class FilterBank:
    """Ordered BSIF kernels, shape ``(count, side, side)``, filter 0 = LSB."""

    kernels: np.ndarray

    def __post_init__(self):
        kernels = self.kernels
        if not isinstance(kernels, np.ndarray):
            shapes = {np.shape(k) for k in kernels}
            if len(shapes) > 1:
                raise MixedKernelSizes(f"kernels have differing shapes {sorted(shapes)}")
        arr = np.array(kernels, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise ValidationError(f"filter bank must be (count, side, side), got {arr.shape}")
        if arr.shape[1] % 2 == 0:
            raise ValidationError("kernel side must be odd")
        if not 1 <= arr.shape[0] <= 8:
            raise ValidationError("filter bank must hold 1..8 kernels for 8-bit codes")
        means = np.abs(arr.reshape(arr.shape[0], -1).mean(axis=1))
        if np.any(means > 1e-6):
            raise ValidationError(f"kernels must be zero-mean within 1e-6 (max |mean| {means.max():.3g})")
        arr.setflags(write=False)
        object.__setattr__(self, "kernels", arr)

    @property
    def count(self) -> int:
        return self.kernels.shape[0]

    @property
    def side(self) -> int:
        return self.kernels.shape[1]

    def to_text(self) -> str:
        lines = [f"BSIF {self.count} {self.side}"]
        for kernel in self.kernels:
            lines.append("")
            lines.extend(" ".join(f"{v:.17g}" for v in row) for row in kernel)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FilterBank":
        tokens = text.split()
        if len(tokens) < 3 or tokens[0] != "BSIF":
            raise ValidationError("filter bank text must start with 'BSIF <count> <side>'")
        try:
            count, side = int(tokens[1]), int(tokens[2])
            values = np.array([float(t) for t in tokens[3:]])
        except ValueError as exc:
            raise ValidationError(f"malformed filter bank: {exc}") from exc
        if values.size != count * side * side:
            raise ValidationError(f"expected {count * side * side} kernel values, found {values.size}")
        return cls(values.reshape(count, side, side))

    def digest(self) -> str:
        return hashlib.sha1(self.to_text().encode("ascii")).hexdigest()[:10]

    def __eq__(self, other):
        if not isinstance(other, FilterBank):
            return NotImplemented
        return bool(np.array_equal(self.kernels, other.kernels))

    __hash__ = None


def load_filter_bank(path) -> FilterBank:
    return FilterBank.from_text(Path(path).read_text(encoding="ascii"))


def save_filter_bank(bank: FilterBank, path) -> None:
    Path(path).write_text(bank.to_text(), encoding="ascii")


# ---------------------------------------------------------------------------


def _require(img: GrayImage, support: int, name: str) -> None:
    if img.width < support or img.height < support:
        raise ImageTooSmall(f"{name} needs at least {support}x{support} pixels, image is {img.width}x{img.height}")


def _neighbor_diffs(arr: np.ndarray) -> list[np.ndarray]:
    """Integer differences neighbour - centre over the 3x3 valid region."""
    h, w = arr.shape
    centre = arr[1 : h - 1, 1 : w - 1]
    return [arr[1 + dy : h - 1 + dy, 1 + dx : w - 1 + dx] - centre for dx, dy in SQUARE_OFFSETS]


def lbp_encode(img: GrayImage, p: LbpParams = LbpParams()) -> CodeImage:
    """Local binary pattern codes; a neighbour >= the centre sets its bit."""
    m = p.margin
    _require(img, 2 * m + 1, "LBP")
    code = np.zeros((img.height - 2 * m, img.width - 2 * m), dtype=np.int64)
    if p.topology == "square3x3":
        for bit, diff in enumerate(_neighbor_diffs(img.data.astype(np.int64))):
            code |= (diff >= 0).astype(np.int64) << bit
        return CodeImage(code)

    arr = img.as_float()
    ys, xs = np.mgrid[m : img.height - m, m : img.width - m].astype(np.float64)
    centre = arr[m : img.height - m, m : img.width - m]
    dxs, dys = circle_offsets(p.radius, p.neighbors)
    for bit, (dx, dy) in enumerate(zip(dxs, dys)):
        a, fx, fy, ba, ca, abcd = bilinear_terms(arr, xs + dx, ys + dy)
        diff = (a - centre) + fx * ba + fy * ca + fx * fy * abcd
        code |= (diff >= -TIE_TOL).astype(np.int64) << bit
    return CodeImage(code)


def ltp_encode(img: GrayImage, p: LtpParams = LtpParams()) -> tuple[CodeImage, CodeImage]:
    """Local ternary pattern split into (upper, lower) binary code rasters."""
    _require(img, 3, "LTP")
    upper = np.zeros((img.height - 2, img.width - 2), dtype=np.int64)
    lower = np.zeros_like(upper)
    for bit, diff in enumerate(_neighbor_diffs(img.data.astype(np.int64))):
        upper |= (diff > p.threshold).astype(np.int64) << bit
        lower |= (diff < -p.threshold).astype(np.int64) << bit
    return CodeImage(upper), CodeImage(lower)


def kirsch_responses(img: GrayImage) -> np.ndarray:
    """Eight Kirsch edge responses, shape ``(8, height - 2, width - 2)``."""
    _require(img, 3, "LDP")
    arr = img.data.astype(np.int64)
    h, w = arr.shape
    out = np.zeros((8, h - 2, w - 2), dtype=np.int64)
    for r in range(3):
        for c in range(3):
            if r == 1 and c == 1:
                continue
            patch = arr[r : h - 2 + r, c : w - 2 + c]
            out += KIRSCH_MASKS[:, r, c, None, None] * patch
    return out


def ldp_encode(img: GrayImage, p: LdpParams = LdpParams()) -> CodeImage:
    """Local directional pattern: bits of the k strongest |Kirsch| responses.

    Equal magnitudes favour the lower direction index, so every code has
    exactly ``k`` bits set.
    """
    mags = np.abs(kirsch_responses(img))
    order = np.argsort(-mags, axis=0, kind="stable")[: p.active_bits]
    code = np.bitwise_or.reduce(np.int64(1) << order, axis=0)
    return CodeImage(code)


_LPQ_PHASES = (
    lambda dx, dy: dx,  # u = (a, 0)
    lambda dx, dy: dy,  # u = (0, a)
    lambda dx, dy: dx + dy,  # u = (a, a)
    lambda dx, dy: dx - dy,  # u = (a, -a)
)


def lpq_coefficients(img: GrayImage, p: LpqParams = LpqParams()) -> np.ndarray:
    """Windowed DFT coefficients at the four LPQ frequencies.

    Returns ``(8, H', W')`` ordered ``[Re F1..F4, Im F1..F4]`` over the valid
    region. With a uniform window and frequency 1/M the transform only sees
    the window through its M phase-residue sums ``G_k``; because the M-th
    roots of unity sum to zero, the real part is formed from
    ``G_k + G_{M-k} - 2 G_0`` and the imaginary part from
    ``G_k - G_{M-k}``. These integer differences make constant windows
    produce exact zeros and leave the result untouched by intensity offsets.
    """
    size = p.window
    _require(img, size, "LPQ")
    r = size // 2
    arr = img.data.astype(np.int64)
    h, w = arr.shape[0] - 2 * r, arr.shape[1] - 2 * r
    sums = np.zeros((4, size, h, w), dtype=np.int64)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            patch = arr[r + dy : r + dy + h, r + dx : r + dx + w]
            for f, phase in enumerate(_LPQ_PHASES):
                sums[f, phase(dx, dy) % size] += patch
    ks = np.arange(1, r + 1)
    cos_k = np.cos(2.0 * np.pi * ks / size)
    sin_k = np.sin(2.0 * np.pi * ks / size)
    out = np.zeros((8, h, w))
    for f in range(4):
        g = sums[f]
        for k, ck, sk in zip(ks, cos_k, sin_k):
            out[f] += ck * (g[k] + g[size - k] - 2 * g[0])
            out[4 + f] -= sk * (g[k] - g[size - k])
    return out


def lpq_encode(img: GrayImage, p: LpqParams = LpqParams()) -> CodeImage:
    """Local phase quantization: bit j set iff component j is strictly positive."""
    coeffs = lpq_coefficients(img, p)
    code = np.tensordot(BIT_WEIGHTS, (coeffs > 0).astype(np.int64), axes=1)
    return CodeImage(code)


def bsif_responses(img: GrayImage, bank: FilterBank, block_rows: int = 8) -> np.ndarray:
    """Filter responses on mean-centred windows, shape ``(H', W', count)``.

    Each window is centred as ``n * window - window_sum`` (integer valued, so
    exact), which scales every response by ``n = side**2`` and discards the
    kernels' DC component. For zero-mean kernels the sign matches
    ``convolve_valid`` while constant regions give exact zeros.
    """
    side = bank.side
    _require(img, side, "BSIF")
    arr = img.as_float()
    n = side * side
    windows = sliding_window_view(arr, (side, side))
    h, w = windows.shape[:2]
    flat_kernels = bank.kernels.reshape(bank.count, n).T.copy()
    out = np.empty((h, w, bank.count))
    for r0 in range(0, h, block_rows):
        block = windows[r0 : r0 + block_rows].reshape(-1, n)
        centred = block * float(n) - block.sum(axis=1, keepdims=True)
        out[r0 : r0 + block_rows] = (centred @ flat_kernels).reshape(-1, w, bank.count)
    return out


def bsif_encode(img: GrayImage, bank: FilterBank) -> CodeImage:
    """Binarized statistical image features; bit i set iff filter i responds > 0."""
    responses = bsif_responses(img, bank)
    return CodeImage((responses > 0).astype(np.int64) @ BIT_WEIGHTS[: bank.count])

