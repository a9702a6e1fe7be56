"""Dense symmetric-matrix kernel.

Symmetric and positive-definite matrices are plain ``numpy.ndarray`` objects
that went through :func:`as_symmetric` or :func:`as_spd`. The eigensolver is a
cyclic Jacobi method using the round-robin (parallel) pair ordering, so that
every rotation of one round touches disjoint row/column pairs and a whole
round is applied as a single vectorized update. Stacks of matrices with shape
``(..., p, p)`` are diagonalized together, which is what the Monte Carlo code
relies on for speed.
"""

from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np

from .exceptions import (
    ConvergenceError,
    DimensionMismatch,
    DomainError,
    NotPositiveDefinite,
    NotSymmetric,
)

SYMMETRY_RTOL = 1e-12
JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 100


class EigenDecomp(NamedTuple):
    """Eigenvalues in ascending order and the matching orthonormal columns."""

    eigenvalues: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.vectors
        return symmetrize((v * self.eigenvalues) @ v.T)


def symmetrize(a):
    """Average ``a`` with its transpose over the last two axes."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def as_symmetric(a) -> np.ndarray:
    """Validate a square, finite, numerically symmetric matrix.

    Entries may differ from their mirror image by at most
    ``1e-12 * max(1, |a_ij|)``; the returned array is the symmetrized average.
    """
    a = np.array(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix has non-finite entries")
    gap = np.abs(a - a.T)
    if np.any(gap > SYMMETRY_RTOL * np.maximum(1.0, np.abs(a))):
        raise NotSymmetric(f"matrix is not symmetric (max asymmetry {gap.max():.3e})")
    return symmetrize(a)


def as_spd(a) -> np.ndarray:
    """Validate a symmetric positive-definite matrix (Cholesky must succeed)."""
    a = as_symmetric(a)
    cholesky(a)
    return a


def check_same_shape(a, b):
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape mismatch: {a.shape} vs {b.shape}")


def cholesky(a) -> np.ndarray:
    """Lower-triangular ``L`` with ``a = L L^T``.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is not strictly positive.
    """
    a = np.asarray(a, dtype=float)
    p = a.shape[0]
    low = np.zeros_like(a)
    for j in range(p):
        row = low[j, :j]
        d = a[j, j] - row @ row
        if not d > 0.0 or not np.isfinite(d):
            raise NotPositiveDefinite(f"non-positive pivot {d:.3e} at column {j}")
        ljj = np.sqrt(d)
        low[j, j] = ljj
        if j + 1 < p:
            low[j + 1 :, j] = (a[j + 1 :, j] - low[j + 1 :, :j] @ row) / ljj
    return low


def inv_lower_triangular(t) -> np.ndarray:
    """Inverse of a (stack of) nonsingular lower-triangular matrices by forward substitution."""
    t = np.asarray(t, dtype=float)
    p = t.shape[-1]
    out = np.zeros_like(t)
    eye = np.eye(p)
    for i in range(p):
        acc = eye[i] - np.einsum("...k,...kj->...j", t[..., i, :i], out[..., :i, :])
        out[..., i, :] = acc / t[..., i, i][..., None]
    return out


@lru_cache(maxsize=None)
def _round_robin(p: int):
    """Disjoint (P, Q) index pairs per round covering every pair once per sweep."""
    m = p + (p % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            x, y = players[i], players[m - 1 - i]
            if x >= p or y >= p:
                continue
            ps.append(min(x, y))
            qs.append(max(x, y))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _jacobi(a: np.ndarray, want_vectors: bool):
    """Diagonalize a stack ``(b, p, p)`` in place; returns (diag, vectors or None)."""
    b, p, _ = a.shape
    v = np.broadcast_to(np.eye(p), (b, p, p)).copy() if want_vectors else None
    if p == 1:
        return a[:, 0, :].copy(), v
    offmask = ~np.eye(p, dtype=bool)
    scale = np.sqrt(np.einsum("bij,bij->b", a, a))
    limit = JACOBI_TOL * scale
    rounds = _round_robin(p)
    for _ in range(JACOBI_MAX_SWEEPS + 1):
        off = np.sqrt(np.sum(np.where(offmask, a * a, 0.0), axis=(1, 2)))
        if np.all(off <= limit):
            return np.diagonal(a, axis1=1, axis2=2).copy(), v
        for ps, qs in rounds:
            app = a[:, ps, ps]
            aqq = a[:, qs, qs]
            apq = a[:, ps, qs]
            nz = apq != 0.0
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                tau = np.where(nz, (aqq - app) / (2.0 * np.where(nz, apq, 1.0)), 0.0)
                t = np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            t = np.where(nz, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            cc, ss = c[:, None, :], s[:, None, :]
            colp, colq = a[:, :, ps], a[:, :, qs]
            a[:, :, ps] = cc * colp - ss * colq
            a[:, :, qs] = ss * colp + cc * colq
            cr, sr = c[:, :, None], s[:, :, None]
            rowp, rowq = a[:, ps, :], a[:, qs, :]
            a[:, ps, :] = cr * rowp - sr * rowq
            a[:, qs, :] = sr * rowp + cr * rowq
            a[:, ps, qs] = 0.0
            a[:, qs, ps] = 0.0
            if want_vectors:
                vp, vq = v[:, :, ps], v[:, :, qs]
                v[:, :, ps] = cc * vp - ss * vq
                v[:, :, qs] = ss * vp + cc * vq
    raise ConvergenceError(f"Jacobi did not converge within {JACOBI_MAX_SWEEPS} sweeps")


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # first component with non-negligible magnitude made positive
    mag = np.abs(vectors)
    lead = np.argmax(mag > 1e-12 * mag.max(axis=-2, keepdims=True), axis=-2)
    picked = np.take_along_axis(vectors, lead[..., None, :], axis=-2)
    return vectors * np.where(picked < 0.0, -1.0, 1.0)


def eigh_stack(a, want_vectors: bool = True):
    """Eigen-decompose a stack of symmetric matrices with shape ``(..., p, p)``.

    Returns ascending eigenvalues ``(..., p)`` and, if requested, vectors
    ``(..., p, p)`` with the sign convention of :func:`eigh`. Inputs are
    symmetrized but not otherwise validated.
    """
    a = symmetrize(a)
    lead_shape = a.shape[:-2]
    p = a.shape[-1]
    work = a.reshape(-1, p, p).copy()
    w, v = _jacobi(work, want_vectors)
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1).reshape(*lead_shape, p)
    if not want_vectors:
        return w, None
    v = np.take_along_axis(v, order[:, None, :], axis=-1)
    v = _fix_signs(v).reshape(*lead_shape, p, p)
    return w, v


def eigh(a) -> EigenDecomp:
    """Symmetric eigendecomposition by cyclic Jacobi rotations.

    Parameters
    ----------
    a : array-like of shape (p, p)
        Symmetric matrix.

    Returns
    -------
    EigenDecomp
        Ascending eigenvalues; column ``k`` of ``vectors`` pairs with
        eigenvalue ``k`` and has its first non-negligible component positive.

    Raises
    ------
    ConvergenceError
        If the off-diagonal mass is still above ``1e-13 * ||a||_F`` after
        100 sweeps.
    """
    a = as_symmetric(a)
    w, v = eigh_stack(a, want_vectors=True)
    return EigenDecomp(w, v)


def eigvalsh(a) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix or a stack of them."""
    w, _ = eigh_stack(a, want_vectors=False)
    return w


def spectral_norm(a):
    """Largest absolute eigenvalue; works on a single matrix or a stack."""
    w = eigvalsh(a)
    return np.maximum(np.abs(w[..., 0]), np.abs(w[..., -1]))


def frobenius_norm(a):
    a = np.asarray(a, dtype=float)
    return np.sqrt(np.sum(a * a, axis=(-2, -1)))


def log_det(a) -> float:
    """Log-determinant of an SPD matrix, ``2 * sum(log diag(L))``."""
    low = cholesky(as_symmetric(a))
    return float(2.0 * np.sum(np.log(np.diagonal(low))))


def matrix_function(a, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply a scalar function through the spectrum: ``V diag(f(w)) V^T``.

    Raises
    ------
    DomainError
        If ``f`` is not finite at some eigenvalue.
    """
    w, v = eigh(a)
    with np.errstate(all="ignore"):
        fw = np.asarray(f(w), dtype=float)
    if not np.all(np.isfinite(fw)):
        raise DomainError(f"function undefined on spectrum (eigenvalues {w.min():.3e}..{w.max():.3e})")
    return symmetrize((v * fw) @ v.T)


def _positive(f):
    def g(w):
        if np.any(w <= 0.0):
            return np.full_like(w, np.nan)
        return f(w)

    return g


def matrix_log(a) -> np.ndarray:
    return matrix_function(a, _positive(np.log))


def matrix_exp(a) -> np.ndarray:
    return matrix_function(a, np.exp)


def matrix_sqrt(a) -> np.ndarray:
    return matrix_function(a, _positive(np.sqrt))


def matrix_inverse(a) -> np.ndarray:
    def recip(w):
        if np.any(w == 0.0):
            return np.full_like(w, np.nan)
        return 1.0 / w

    return matrix_function(a, recip)
