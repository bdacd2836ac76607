"""Learn BSIF filter banks with PCA whitening and symmetric FastICA."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .descriptors import FilterBank
from .errors import ConvergenceWarning, DimensionMismatch, EmptyCorpus, ImageTooSmall, RankDeficient, ValidationError
from .imagecore import GrayImage

DEFAULT_PATCHES = 50_000
MIN_EIGENVALUE = 1e-10


@dataclass(frozen=True, eq=False)
class PatchMatrix:
    """Centred patches stored as columns, shape ``(side**2, count)``."""

    data: np.ndarray
    side: int

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def count(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class Whitener:
    projection: np.ndarray  # (k, dim), rows = eigvec / sqrt(eigval)
    eigenvalues: np.ndarray  # (k,), descending
    mean: np.ndarray  # (dim,) removed before projecting

    def apply(self, data: np.ndarray) -> np.ndarray:
        return self.projection @ (data - self.mean[:, None])


class IcaResult(NamedTuple):
    unmixing: np.ndarray
    converged: bool
    iterations: int


def sample_patches(corpus: Sequence[GrayImage], side: int, count: int, seed: int) -> PatchMatrix:
    """Uniformly drawn interior patches, each mean-removed, then globally centred."""
    if not corpus:
        raise EmptyCorpus("no images to sample patches from")
    if side < 1 or count < 1:
        raise ValidationError("side and count must be positive")
    for i, img in enumerate(corpus):
        if img.width < side or img.height < side:
            raise ImageTooSmall(f"corpus image {i} is {img.width}x{img.height}, smaller than {side}x{side}")
    rng = np.random.default_rng(seed)
    which = rng.integers(0, len(corpus), size=count)
    uy = rng.random(count)
    ux = rng.random(count)
    out = np.empty((count, side * side))
    for i, img in enumerate(corpus):
        sel = np.flatnonzero(which == i)
        if sel.size == 0:
            continue
        ys = np.floor(uy[sel] * (img.height - side + 1)).astype(np.intp)
        xs = np.floor(ux[sel] * (img.width - side + 1)).astype(np.intp)
        windows = sliding_window_view(img.as_float(), (side, side))
        out[sel] = windows[ys, xs].reshape(sel.size, -1)
    out -= out.mean(axis=1, keepdims=True)
    out -= out.mean(axis=0, keepdims=True)
    return PatchMatrix(out.T.copy(), side)


def whiten(patches, k: int) -> tuple[Whitener, np.ndarray]:
    """Project onto the top-``k`` principal axes scaled to unit variance.

    Covariance uses the population normalization (divide by the sample
    count), so ``z @ z.T / count`` is the identity.
    """
    data = patches.data if isinstance(patches, PatchMatrix) else np.asarray(patches, dtype=np.float64)
    dim, n = data.shape
    if not 1 <= k <= dim:
        raise ValidationError(f"k must be in 1..{dim}")
    mean = data.mean(axis=1)
    centred = data - mean[:, None]
    cov = centred @ centred.T / n
    vals, vecs = np.linalg.eigh(cov)
    vals, vecs = vals[::-1][:k], vecs[:, ::-1][:, :k]
    if vals[-1] <= MIN_EIGENVALUE:
        raise RankDeficient(f"only {int((vals > MIN_EIGENVALUE).sum())} eigenvalues exceed {MIN_EIGENVALUE}")
    # fix eigenvector signs so the output does not depend on the solver
    pivot = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[pivot, np.arange(k)])
    projection = vecs.T / np.sqrt(vals)[:, None]
    w = Whitener(projection, vals, mean)
    return w, projection @ centred


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    """W <- (W W^T)^(-1/2) W."""
    s, u = np.linalg.eigh(w @ w.T)
    s = np.clip(s, np.finfo(np.float64).tiny, None)
    return (u / np.sqrt(s)) @ u.T @ w


def fast_ica(
    whitened: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 200,
    tol: float = 1e-6,
) -> IcaResult:
    """Symmetric fixed-point ICA with ``g(u) = tanh(u)``.

    ``whitened`` is ``(k, n)`` with identity covariance. Rows of the returned
    unmixing matrix are orthonormal. On hitting ``max_iter`` the last
    iterate is returned with ``converged=False`` and a ConvergenceWarning.
    """
    z = np.asarray(whitened, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] != k:
        raise DimensionMismatch(f"expected whitened data with {k} rows, got shape {z.shape}")
    n = z.shape[1]
    rng = np.random.default_rng(seed)
    w = _sym_decorrelate(rng.standard_normal((k, k)))
    for it in range(1, max_iter + 1):
        g = np.tanh(w @ z)
        g_prime = 1.0 - g * g
        w_new = _sym_decorrelate(g @ z.T / n - g_prime.mean(axis=1)[:, None] * w)
        change = float(np.max(np.abs(np.abs(np.einsum("ij,ij->i", w_new, w)) - 1.0)))
        w = w_new
        if change < tol:
            return IcaResult(w, True, it)
    warnings.warn(f"FastICA did not converge in {max_iter} iterations (last change {change:.2e})", ConvergenceWarning)
    return IcaResult(w, False, max_iter)


def build_bank(whitener: Whitener, unmixing: np.ndarray, side: int) -> FilterBank:
    """Kernel i is row i of ``unmixing @ projection`` reshaped to side x side."""
    unmixing = np.atleast_2d(np.asarray(unmixing, dtype=np.float64))
    k, dim = whitener.projection.shape
    if unmixing.shape != (k, k) or dim != side * side:
        raise DimensionMismatch(
            f"unmixing {unmixing.shape} / projection {whitener.projection.shape} incompatible with side {side}"
        )
    filters = unmixing @ whitener.projection
    return FilterBank(filters.reshape(k, side, side))


def learn_filter_bank(
    corpus: Sequence[GrayImage],
    k: int = 8,
    side: int = 17,
    seed: int = 0,
    count: int = DEFAULT_PATCHES,
    max_iter: int = 200,
    tol: float = 1e-6,
) -> tuple[FilterBank, IcaResult]:
    patches = sample_patches(corpus, side, count, seed)
    whitener, z = whiten(patches, k)
    result = fast_ica(z, k, seed, max_iter=max_iter, tol=tol)
    return build_bank(whitener, result.unmixing, side), result
