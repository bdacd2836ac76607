"""Histogram feature vectors built from code rasters."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import descriptors as D
from .errors import EmptyCodeImage, TagMismatch, ValidationError
from .imagecore import GrayImage

DESCRIPTOR_NAMES = ("lbp", "ltp", "ldp", "lpq", "bsif")


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Normalized code histogram tagged with the descriptor that produced it."""

    bins: np.ndarray
    tag: str

    def __post_init__(self):
        arr = np.array(self.bins, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("feature bins must be a non-empty 1-D sequence")
        arr.setflags(write=False)
        object.__setattr__(self, "bins", arr)

    def __len__(self) -> int:
        return self.bins.size

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return self.tag == other.tag and bool(np.array_equal(self.bins, other.bins))

    __hash__ = None


def require_same_tag(vectors: Iterable[FeatureVector]) -> str:
    tags = {v.tag for v in vectors}
    if len(tags) > 1:
        raise TagMismatch(f"feature vectors carry different descriptor tags: {sorted(tags)}")
    (tag,) = tags
    return tag


def histogram(codes: D.CodeImage, tag: str = "codes", n_bins: int = 256, zero_mean: bool = False) -> FeatureVector:
    """L1-normalized code histogram.

    ``zero_mean`` additionally subtracts the mean bin value; the result then
    sums to zero rather than one and is kept only for experimentation.
    """
    flat = codes.codes.ravel()
    if flat.size == 0:
        raise EmptyCodeImage("cannot histogram an empty code raster")
    bins = np.bincount(flat, minlength=n_bins).astype(np.float64) / flat.size
    if zero_mean:
        bins = bins - bins.mean()
    return FeatureVector(bins, tag)


def concat_normalize(upper: FeatureVector, lower: FeatureVector) -> FeatureVector:
    """Join LTP upper/lower histograms into one 512-bin vector summing to 1."""
    base_u, _, half_u = upper.tag.rpartition(":")
    base_l, _, half_l = lower.tag.rpartition(":")
    if not base_u.startswith("ltp") or (half_u, half_l) != ("upper", "lower") or base_u != base_l:
        raise TagMismatch(f"expected matching LTP upper/lower tags, got {upper.tag!r} and {lower.tag!r}")
    if len(upper) != 256 or len(lower) != 256:
        raise ValidationError("LTP halves must both have 256 bins")
    return FeatureVector(np.concatenate([upper.bins, lower.bins]) / 2.0, f"{base_u}:concat")


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DescriptorConfig:
    """A descriptor name plus its parameter block; knows how to extract features."""

    name: str
    lbp: D.LbpParams = field(default_factory=D.LbpParams)
    ltp: D.LtpParams = field(default_factory=D.LtpParams)
    ldp: D.LdpParams = field(default_factory=D.LdpParams)
    lpq: D.LpqParams = field(default_factory=D.LpqParams)
    bank: Optional[D.FilterBank] = field(default=None, compare=False)
    zero_mean: bool = False

    def __post_init__(self):
        if self.name not in DESCRIPTOR_NAMES:
            raise ValidationError(f"unknown descriptor {self.name!r}; choose from {', '.join(DESCRIPTOR_NAMES)}")
        if self.name == "bsif" and self.bank is None:
            raise ValidationError("bsif requires a filter bank")

    @property
    def tag(self) -> str:
        if self.name == "lbp":
            p = self.lbp
            base = f"lbp(P={p.neighbors},R={p.radius:g},{p.topology})"
        elif self.name == "ltp":
            base = f"ltp(t={self.ltp.threshold:g})"
            base += ":upper" if self.ltp.split_mode == "upper_only" else ":concat"
        elif self.name == "ldp":
            base = f"ldp(k={self.ldp.active_bits})"
        elif self.name == "lpq":
            base = f"lpq(M={self.lpq.window})"
        else:
            base = f"bsif(n={self.bank.count},side={self.bank.side},{self.bank.digest()})"
        return base + ("+zm" if self.zero_mean else "")

    @property
    def n_bins(self) -> int:
        if self.name == "ltp" and self.ltp.split_mode == "concat_upper_lower":
            return 512
        return 256

    def describe(self) -> dict:
        """Parameter echo for reports."""
        out = {"name": self.name, "tag": self.tag, "zero_mean": self.zero_mean}
        if self.name == "lbp":
            out.update(neighbors=self.lbp.neighbors, radius=self.lbp.radius, topology=self.lbp.topology)
        elif self.name == "ltp":
            out.update(threshold=self.ltp.threshold, split_mode=self.ltp.split_mode)
        elif self.name == "ldp":
            out.update(active_bits=self.ldp.active_bits)
        elif self.name == "lpq":
            out.update(window=self.lpq.window)
        else:
            out.update(filters=self.bank.count, side=self.bank.side, bank_digest=self.bank.digest())
        return out

    def extract(self, img: GrayImage) -> FeatureVector:
        if self.name == "ltp":
            upper, lower = D.ltp_encode(img, self.ltp)
            base = f"ltp(t={self.ltp.threshold:g})"
            hu = histogram(upper, f"{base}:upper")
            if self.ltp.split_mode == "upper_only":
                fv = hu
            else:
                fv = concat_normalize(hu, histogram(lower, f"{base}:lower"))
            if self.zero_mean:
                fv = FeatureVector(fv.bins - fv.bins.mean(), self.tag)
            return fv
        if self.name == "lbp":
            codes = D.lbp_encode(img, self.lbp)
        elif self.name == "ldp":
            codes = D.ldp_encode(img, self.ldp)
        elif self.name == "lpq":
            codes = D.lpq_encode(img, self.lpq)
        else:
            codes = D.bsif_encode(img, self.bank)
        return histogram(codes, self.tag, zero_mean=self.zero_mean)


# ---------------------------------------------------------------------------
# CSV serialization: ``tag, bin_0, ..., bin_{n-1}``, 12 significant digits


def format_bins(bins: np.ndarray) -> list[str]:
    return [f"{v:.12g}" for v in bins]


def write_vectors(vectors: Iterable[FeatureVector]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for v in vectors:
        writer.writerow([v.tag, *format_bins(v.bins)])
    return buf.getvalue()


def read_vectors(text: str) -> list[FeatureVector]:
    rows = csv.reader(io.StringIO(text))
    return [FeatureVector([float(x) for x in row[1:]], row[0]) for row in rows if row]
