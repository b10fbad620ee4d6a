"""Dense linear-algebra kernels shared by every other module.

Thin, contract-checked wrappers around LAPACK (via numpy/scipy) for SVD and
column-pivoted QR, truncation-rank rules for singular values and R-diagonals,
a deterministic Lloyd k-means with k-means++ restarts, and incremental
orthonormalization with deflation. All functions are pure and deterministic
for fixed inputs (and fixed seed where one is taken).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = [
    "SvdResult",
    "PivotedQrResult",
    "KmeansResult",
    "svd",
    "rank_from_energy",
    "pivoted_qr",
    "rank_from_rdiag",
    "kmeans",
    "orthonormalize_against",
]

_DEFLATION_TOL = 1e-12


def _as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must be 2-d with at least one row and column, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class SvdResult:
    """Economy SVD A = U @ diag(s) @ Vt with s sorted non-increasing."""

    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray  # columns are right singular vectors (V, not V^T)


@dataclass(frozen=True)
class PivotedQrResult:
    """Column-pivoted factorization A[:, pivots] = Q @ R."""

    q_factor: np.ndarray
    r_factor: np.ndarray
    pivots: np.ndarray


@dataclass(frozen=True)
class KmeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    objective: float
    representative_rows: np.ndarray  # one row index per cluster, nearest to its centroid


def svd(a) -> SvdResult:
    """Economy SVD with non-increasing singular values.

    Raises
    ------
    ValueError
        If the input is not a finite matrix.
    np.linalg.LinAlgError
        If the factorization does not converge; the message carries the
        matrix dimensions.
    """
    a = _as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError(
            f"SVD did not converge for a {a.shape[0]}x{a.shape[1]} matrix"
        ) from err
    return SvdResult(left_vectors=u, singular_values=s, right_vectors=vt.T)


def rank_from_energy(sigma, eps_svd: float) -> int:
    """Smallest ell with (sum of sigma[ell:]) / (sum of sigma) < eps_svd.

    Uses the relative energy of the singular-value tail; the spectrum must
    contain at least one positive value.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 1 or sigma.size == 0:
        raise ValueError("sigma must be a non-empty 1-d array")
    if not 0.0 < eps_svd < 1.0:
        raise ValueError(f"eps_svd must lie in (0, 1), got {eps_svd}")
    total = float(sigma.sum())
    if total <= 0.0:
        raise ValueError("zero spectrum")
    # tail[i] = sum of sigma[i+1:], so tail ratio at ell is tail[ell-1]/total
    tails = total - np.cumsum(sigma)
    ratios = tails / total
    below = np.nonzero(ratios < eps_svd)[0]
    return int(below[0]) + 1 if below.size else sigma.size


def pivoted_qr(a) -> PivotedQrResult:
    """Column-pivoted QR (greedy max-residual-norm column order).

    Pivot ties between columns of equal residual norm resolve to the lowest
    column index, so the factorization is reproducible.
    """
    a = _as_matrix(a)
    q, r, piv = sla.qr(a, mode="economic", pivoting=True)
    return PivotedQrResult(q_factor=q, r_factor=r, pivots=piv)


def rank_from_rdiag(r_factor, eps_qr: float) -> int:
    """Number of leading pivots kept by the |R| diagonal drop-off rule.

    Returns the smallest h such that |R[h, h]| / |R[0, 0]| < eps_qr, or the
    full diagonal length when no entry falls below the threshold.
    """
    r_factor = np.asarray(r_factor, dtype=float)
    d = np.abs(np.diag(r_factor))
    if d.size == 0 or d[0] == 0.0:
        raise ValueError("rank-zero matrix")
    below = np.nonzero(d[1:] / d[0] < eps_qr)[0]
    return int(below[0]) + 1 if below.size else d.size


def _kmeans_pp_init(rows, k, rng):
    """k-means++ seeding: spread initial centroids by squared-distance sampling."""
    n = rows.shape[0]
    centroids = np.empty((k, rows.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = rows[first]
    d2 = np.sum((rows - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with chosen centroids
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = rows[idx]
        d2 = np.minimum(d2, np.sum((rows - centroids[j]) ** 2, axis=1))
    return centroids


def _lloyd(rows, k, rng, max_iter=300):
    centroids = _kmeans_pp_init(rows, k, rng)
    assignments = np.full(rows.shape[0], -1, dtype=int)
    for _ in range(max_iter):
        d2 = np.sum((rows[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(d2, axis=1)
        # repair empty clusters with the point farthest from its centroid
        for c in range(k):
            if not np.any(new_assign == c):
                far = int(np.argmax(d2[np.arange(rows.shape[0]), new_assign]))
                new_assign[far] = c
                centroids[c] = rows[far]
                d2[:, c] = np.sum((rows - centroids[c]) ** 2, axis=1)
        if np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
        for c in range(k):
            members = assignments == c
            if np.any(members):
                centroids[c] = rows[members].mean(axis=0)
    d2 = np.sum((rows[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    objective = float(d2[np.arange(rows.shape[0]), assignments].sum())
    return assignments, centroids, objective


def kmeans(rows_of, k: int, restarts: int = 5, seed: int = 0) -> KmeansResult:
    """Best-of-restarts Lloyd k-means over the rows of a matrix.

    Each restart seeds its own generator from ``seed + restart`` so that a
    concurrent execution of the restarts would reproduce the sequential
    result. Ties in the objective resolve to the earliest restart.
    """
    rows = _as_matrix(rows_of, "rows_of")
    n = rows.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= {n}, got {k}")
    if k == n:
        # degenerate: every row its own singleton cluster
        assignments = np.arange(n)
        return KmeansResult(assignments, rows.copy(), 0.0, np.arange(n))
    best = None
    for t in range(restarts):
        rng = np.random.default_rng(seed + t)
        assignments, centroids, objective = _lloyd(rows, k, rng)
        if best is None or objective < best[2]:
            best = (assignments, centroids, objective)
    assignments, centroids, objective = best
    reps = np.empty(k, dtype=int)
    for c in range(k):
        members = np.nonzero(assignments == c)[0]
        d2 = np.sum((rows[members] - centroids[c]) ** 2, axis=1)
        reps[c] = members[int(np.argmin(d2))]
    return KmeansResult(assignments, centroids, objective, reps)


def orthonormalize_against(v, w):
    """Append the columns of ``w`` to the orthonormal basis ``v``.

    Columns whose residual after projection falls below
    ``1e-12 * (original norm + 1)`` are dropped (deflation). Projection runs
    twice per column to keep the result orthonormal to round-off.

    Returns
    -------
    (basis, dropped) : (np.ndarray, int)
        The enlarged orthonormal basis and the number of dropped columns.
    """
    w = _as_matrix(w, "w")
    n = w.shape[0]
    if v is None or (hasattr(v, "size") and np.asarray(v).size == 0):
        cols = []
    else:
        v = _as_matrix(v, "v")
        if v.shape[0] != n:
            raise ValueError(f"row mismatch: basis has {v.shape[0]} rows, w has {n}")
        cols = [v[:, j] for j in range(v.shape[1])]
    dropped = 0
    for j in range(w.shape[1]):
        x = w[:, j].copy()
        pre_norm = np.linalg.norm(x)
        for _ in range(2):
            for q in cols:
                x -= (q @ x) * q
        nrm = np.linalg.norm(x)
        if nrm < _DEFLATION_TOL * (pre_norm + 1.0):
            dropped += 1
            continue
        cols.append(x / nrm)
    basis = np.column_stack(cols) if cols else np.empty((n, 0))
    return basis, dropped
