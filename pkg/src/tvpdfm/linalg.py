"""Dense kernels for square-root covariance propagation.

Everything here works on small matrices (a handful of states) and is compiled
with numba so that the filter recursions can call the kernels directly.  The
public wrappers validate their input and translate kernel status codes into
exceptions; the ``_``-prefixed kernels never raise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, IndefiniteMatrix, NotSymmetric, SingularDelta

OK = 0
INDEFINITE = 2

SYMMETRY_TOL = 1e-10
NEGATIVE_PIVOT_TOL = 1e-8
PIVOT_TOL = 1e-12
DELTA_TOL = 1e-12


@dataclass(frozen=True)
class SqrtFactor:
    """Triangular square root of a PSD matrix.

    ``orientation == "lower"`` means ``factor @ factor.T`` is the matrix,
    ``"upper"`` means ``factor.T @ factor`` is.
    """

    factor: np.ndarray
    orientation: str = "lower"

    def __post_init__(self):
        if self.orientation not in ("lower", "upper"):
            raise ValueError(f"unknown orientation {self.orientation!r}")

    def covariance(self) -> np.ndarray:
        f = self.factor
        return f @ f.T if self.orientation == "lower" else f.T @ f

    def lower(self) -> np.ndarray:
        return self.factor if self.orientation == "lower" else self.factor.T


@njit(cache=True)
def _triangularize(a):
    # upper-triangular R with R'R = A'A and a nonnegative diagonal
    r = np.linalg.qr(a)[1]
    for i in range(r.shape[0]):
        if r[i, i] < 0.0:
            for j in range(r.shape[1]):
                r[i, j] = -r[i, j]
    return r


@njit(cache=True)
def _psd_sqrt(a):
    """Lower-triangular factor of a symmetric PSD matrix.

    Diagonal-pivoted Cholesky that stops once every remaining pivot is below
    ``PIVOT_TOL * max(diag)``; the permuted factor is re-triangularized by QR.
    Returns ``(factor, status)``.
    """
    n = a.shape[0]
    work = 0.5 * (a + a.T)
    lower = np.zeros((n, n))
    perm = np.arange(n)
    if n == 0:
        return lower, OK
    maxdiag = 0.0
    for i in range(n):
        maxdiag = max(maxdiag, work[i, i])
    tol = PIVOT_TOL * maxdiag
    neg_tol = NEGATIVE_PIVOT_TOL * max(1.0, maxdiag)
    pivoted = False
    for j in range(n):
        p = j
        for i in range(j + 1, n):
            if work[i, i] > work[p, p]:
                p = i
        if p != j:
            pivoted = True
            for c in range(n):
                tmp = work[j, c]
                work[j, c] = work[p, c]
                work[p, c] = tmp
            for r in range(n):
                tmp = work[r, j]
                work[r, j] = work[r, p]
                work[r, p] = tmp
            for c in range(j):
                tmp = lower[j, c]
                lower[j, c] = lower[p, c]
                lower[p, c] = tmp
            tmp = perm[j]
            perm[j] = perm[p]
            perm[p] = tmp
        d = work[j, j]
        if d <= tol:
            for i in range(j, n):
                if work[i, i] < -neg_tol:
                    return lower, INDEFINITE
            pivoted = True
            break
        piv = np.sqrt(d)
        lower[j, j] = piv
        for i in range(j + 1, n):
            lower[i, j] = work[i, j] / piv
        for i in range(j + 1, n):
            for c in range(j + 1, i + 1):
                work[i, c] -= lower[i, j] * lower[c, j]
                work[c, i] = work[i, c]
    if not pivoted:
        return lower, OK
    factor = np.zeros((n, n))
    for i in range(n):
        factor[perm[i], :] = lower[i, :]
    return _triangularize(factor.T).T.copy(), OK


@njit(cache=True)
def _block_qr_update(top_left, bottom_left, bottom_right):
    k = top_left.shape[0]
    n = bottom_right.shape[0]
    pre = np.zeros((k + n, k + n))
    pre[:k, :k] = top_left
    pre[k:, :k] = bottom_left
    pre[k:, k:] = bottom_right
    r = _triangularize(pre)
    delta = r[:k, :k].copy()
    upsilon = r[:k, k:].copy()
    sqrt_updated = r[k:, k:].T.copy()
    return delta, upsilon, sqrt_updated


def _as_matrix(m, name="matrix") -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def cholesky_factor(m) -> SqrtFactor:
    """Lower Cholesky factor of a symmetric PSD matrix.

    Rank-deficient input is handled by diagonal pivoting; the returned factor
    is still lower triangular, with zeroed trailing columns.

    >>> cholesky_factor([[4.0, 2.0], [2.0, 5.0]]).factor
    array([[2., 0.],
           [1., 2.]])
    """
    a = _as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {a.shape}")
    scale = 1.0 + (np.abs(a).max() if a.size else 0.0)
    if a.size and np.abs(a - a.T).max() > SYMMETRY_TOL * scale:
        raise NotSymmetric("matrix is not symmetric")
    factor, status = _psd_sqrt(np.ascontiguousarray(a))
    if status != OK:
        raise IndefiniteMatrix("matrix has a pivot below the indefiniteness tolerance")
    return SqrtFactor(factor + 0.0, "lower")


def qr_triangularize(a) -> np.ndarray:
    """Upper-triangular ``R`` (nonnegative diagonal) with ``R.T @ R == A.T @ A``."""
    a = _as_matrix(a)
    if a.shape[0] < a.shape[1]:
        raise DimensionMismatch(
            f"need at least as many rows as columns, got {a.shape}"
        )
    return _triangularize(np.ascontiguousarray(a))


def block_qr_update(top_left, top_right, bottom_left, bottom_right):
    """Triangularize the measurement-update pre-array.

    The pre-array is ``[[Rn', 0], [L' Jh', L']]`` where ``Rn`` is a lower
    square root of the residual noise covariance and ``L`` a lower square root
    of the predicted state covariance.  Its upper-triangular QR factor is
    ``[[Delta, Upsilon], [0, U]]`` with ``Delta' Delta = S``, the gain
    ``W = Upsilon' Delta^{-T}`` and the updated covariance ``U' U``.

    Returns ``(delta, upsilon, sqrt_updated)``; ``sqrt_updated`` is lower.
    """
    tl = _as_matrix(top_left, "top_left")
    tr = _as_matrix(top_right, "top_right")
    bl = _as_matrix(bottom_left, "bottom_left")
    br = _as_matrix(bottom_right, "bottom_right")
    k, n = tl.shape[0], br.shape[0]
    if (
        tl.shape != (k, k)
        or tr.shape != (k, n)
        or bl.shape != (n, k)
        or br.shape != (n, n)
    ):
        raise DimensionMismatch(
            f"blocks do not conform: {tl.shape}, {tr.shape}, {bl.shape}, {br.shape}"
        )
    if np.any(tr != 0.0):
        raise DimensionMismatch("top-right block must be zero")
    delta, upsilon, sqrt_updated = _block_qr_update(
        np.ascontiguousarray(tl), np.ascontiguousarray(bl), np.ascontiguousarray(br)
    )
    if np.any(np.abs(np.diag(delta)) < DELTA_TOL):
        raise SingularDelta("Delta is singular; residual covariance is degenerate")
    return delta, upsilon, sqrt_updated


def gain_from_blocks(delta, upsilon) -> np.ndarray:
    """Kalman gain ``W = Upsilon' Delta^{-T}`` from the update array blocks."""
    return solve_triangular(delta, upsilon, lower=False).T


def symmetrize(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    return 0.5 * (a + a.T)


def min_eigenvalue(m) -> float:
    return float(np.linalg.eigvalsh(symmetrize(m)).min())
