"""Interpolation-point and parameter-sample selectors.

All selectors operate on a snapshot matrix whose ROWS are the candidate
points (spatial points for classic interpolation, parameter samples when the
matrix collects output trajectories row-wise). Each returns the selected row
indices together with the truncated left singular basis they were chosen
for.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import kmeans, pivoted_qr, rank_from_energy, rank_from_rdiag, svd
from .sampling import TrainingSet

__all__ = [
    "InterpolationSelection",
    "deim_indices",
    "deim",
    "qdeim",
    "kdeim",
    "gappy_eigenvector",
    "gappy_clustering",
    "qr_pivot_select",
    "subsample_training_set",
]


@dataclass(frozen=True)
class InterpolationSelection:
    """Selected row indices plus the basis they interpolate.

    ``basis`` has orthonormal columns (ambient x ell); ``indices`` holds ell
    entries for square selections or m > ell when oversampled, in selection
    order. ``growth_sigmas`` records the smallest singular value of the
    selected-row matrix after each oversampling append.
    """

    basis: np.ndarray
    indices: np.ndarray
    method: str
    singular_values: np.ndarray = None
    growth_sigmas: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        object.__setattr__(self, "indices", idx)
        n = self.basis.shape[0]
        if idx.size == 0:
            raise ValueError("selection must contain at least one index")
        if np.unique(idx).size != idx.size:
            raise ValueError("selection indices must be distinct")
        if idx.min() < 0 or idx.max() >= n:
            raise ValueError(f"selection index out of range for ambient dimension {n}")

    def __len__(self):
        return self.indices.size

    @property
    def rank(self):
        return self.basis.shape[1]

    def selected_rows(self):
        """The (len(indices) x ell) matrix P^T U of the interpolation system."""
        return self.basis[self.indices]


def deim_indices(u) -> np.ndarray:
    """Greedy interpolation indices for an orthonormal basis.

    The first index maximizes |u_1|; each following index maximizes the
    absolute residual of the next basis vector after interpolating it at the
    indices chosen so far. argmax ties resolve to the lowest index.
    """
    u = np.asarray(u, dtype=float)
    n, ell = u.shape
    indices = [int(np.argmax(np.abs(u[:, 0])))]
    for i in range(1, ell):
        rows = np.array(indices)
        coef = np.linalg.solve(u[rows, :i], u[rows, i])
        residual = u[:, i] - u[:, :i] @ coef
        indices.append(int(np.argmax(np.abs(residual))))
    return np.array(indices, dtype=int)


def _truncated_basis(f, eps_svd):
    res = svd(f)
    if res.singular_values[0] <= 0.0:
        raise ValueError("zero spectrum")
    ell = rank_from_energy(res.singular_values, eps_svd)
    return res.left_vectors[:, :ell], res.singular_values


def deim(f, eps_svd: float) -> InterpolationSelection:
    """Classic greedy empirical interpolation over the rows of ``f``."""
    u, sigma = _truncated_basis(f, eps_svd)
    return InterpolationSelection(u, deim_indices(u), "deim", sigma)


def qdeim(f, eps_svd: float) -> InterpolationSelection:
    """Interpolation indices from a column-pivoted QR of the basis transpose."""
    u, sigma = _truncated_basis(f, eps_svd)
    piv = pivoted_qr(u.T).pivots
    return InterpolationSelection(u, piv[: u.shape[1]], "qdeim", sigma)


def kdeim(f, eps_svd: float, seed: int = 0) -> InterpolationSelection:
    """Cluster the basis rows and interpolate at the cluster representatives."""
    u, sigma = _truncated_basis(f, eps_svd)
    ell = u.shape[1]
    if ell > u.shape[0]:
        raise ValueError(f"basis rank {ell} exceeds row count {u.shape[0]}")
    result = kmeans(u, ell, restarts=5, seed=seed)
    return InterpolationSelection(u, result.representative_rows, "kdeim", sigma)


def gappy_eigenvector(base: InterpolationSelection, m: int) -> InterpolationSelection:
    """Grow a selection one row at a time, maximizing the smallest singular
    value of the selected-row matrix (exhaustive candidate scan)."""
    u = base.basis
    n = u.shape[0]
    if m < len(base):
        raise ValueError(f"budget m={m} smaller than base selection {len(base)}")
    if m > n:
        raise ValueError(f"budget m={m} exceeds ambient row count {n}")
    indices = list(base.indices)
    sigmas = [float(np.linalg.svd(u[indices], compute_uv=False)[-1])]
    if m == len(base):
        return InterpolationSelection(u, base.indices, "gappy-eig", base.singular_values,
                                      np.array(sigmas))
    selected = np.zeros(n, dtype=bool)
    selected[indices] = True
    while len(indices) < m:
        candidates = np.nonzero(~selected)[0]
        block = u[indices]
        stacked = np.broadcast_to(block, (candidates.size,) + block.shape)
        trial = np.concatenate([stacked, u[candidates][:, None, :]], axis=1)
        smin = np.linalg.svd(trial, compute_uv=False)[:, -1]
        best = int(np.argmax(smin))
        indices.append(int(candidates[best]))
        selected[candidates[best]] = True
        sigmas.append(float(smin[best]))
    return InterpolationSelection(u, np.array(indices), "gappy-eig", base.singular_values,
                                  np.array(sigmas))


def gappy_clustering(f, eps_svd: float, m: int, seed: int = 0) -> InterpolationSelection:
    """Oversampled selection from k-means with as many clusters as the budget."""
    u, sigma = _truncated_basis(f, eps_svd)
    ell = u.shape[1]
    if m < ell:
        raise ValueError(f"budget m={m} smaller than basis rank {ell}")
    if m > u.shape[0]:
        raise ValueError(f"budget m={m} exceeds row count {u.shape[0]}")
    result = kmeans(u, m, restarts=5, seed=seed)
    return InterpolationSelection(u, result.representative_rows, "gappy-clust", sigma)


def qr_pivot_select(y, eps_qr: float) -> InterpolationSelection:
    """Leading pivots of a column-pivoted QR of the transposed row-snapshot
    matrix; the pivot count follows the |R| diagonal drop-off rule."""
    y = np.asarray(y, dtype=float)
    if not np.any(y):
        raise ValueError("zero matrix")
    qr = pivoted_qr(y.T)
    h = rank_from_rdiag(qr.r_factor, eps_qr)
    res = svd(y)
    return InterpolationSelection(res.left_vectors[:, :h], qr.pivots[:h], "qr",
                                  res.singular_values)


def subsample_training_set(fine: TrainingSet, selection: InterpolationSelection) -> TrainingSet:
    """Restrict a fine training set to the selected parameter indices,
    keeping the fine-set ordering."""
    return fine.take(selection.indices)
