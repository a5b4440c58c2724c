"""Small dense-matrix kernel backed by numpy.

Matrices are plain 2-D float64 ``ndarray`` objects. The helpers here validate
shape/finiteness and provide the handful of norms and products the rest of the
package needs.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DimensionError, NumericalError

MAX_POWER_ITERS = 10_000


def as_dense(a) -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array, raising on bad input."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError("matrix has non-finite entries")
    return arr


def j_matrix(n: int) -> np.ndarray:
    """The averaging matrix 11^T / n."""
    if n < 1:
        raise DimensionError(f"dimension must be >= 1, got {n}")
    return np.full((n, n), 1.0 / n)


def frobenius_norm_sq(a) -> float:
    a = as_dense(a)
    return float(np.sum(a * a))


def _power_iterate(ata: np.ndarray, v: np.ndarray, tol: float) -> float:
    lam_prev = None
    for _ in range(MAX_POWER_ITERS):
        w = ata @ v
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if lam_prev is not None and abs(lam - lam_prev) <= tol * max(abs(lam), 1e-300):
            return max(lam, 0.0)
        lam_prev = lam
    raise NumericalError(f"power iteration did not converge in {MAX_POWER_ITERS} iterations")


def operator_norm(a, tol: float = 1e-10) -> float:
    """Largest singular value via power iteration on A^T A.

    Starts from the normalized all-ones vector, then repeats from a fixed-seed
    Gaussian vector and keeps the larger estimate, so a start vector that is
    orthogonal to the top singular direction cannot silently under-report.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = as_dense(a)
    if a.size == 0:
        return 0.0
    ata = a.T @ a
    n = ata.shape[0]
    starts = [np.full(n, 1.0 / np.sqrt(n)), np.random.default_rng(0).standard_normal(n)]
    best = 0.0
    for v0 in starts:
        v0 = v0 / np.linalg.norm(v0)
        best = max(best, _power_iterate(ata, v0, tol))
    return float(np.sqrt(best))


def phi_product(schedule: Sequence, n: int | None = None) -> np.ndarray:
    """Ordered product W_s^T W_{s+1}^T ... W_k^T of a list of square matrices.

    An empty list yields the identity of size ``n``.
    """
    if len(schedule) == 0:
        if n is None:
            raise DimensionError("empty schedule needs an explicit dimension")
        return np.eye(n)
    mats = [as_dense(w) for w in schedule]
    dim = mats[0].shape[0]
    if n is not None and n != dim:
        raise DimensionError(f"schedule dimension {dim} != requested {n}")
    out = np.eye(dim)
    for w in mats:
        if w.shape != (dim, dim):
            raise DimensionError(f"expected {dim}x{dim} matrix, got {w.shape}")
        out = out @ w.T
    return out
