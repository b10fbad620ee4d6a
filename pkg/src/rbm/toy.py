"""Two-parameter nonlinear toy function and its snapshot matrix.

The function is smooth on [-1, 1]^2 x [-0.4, 0.4]^2; the denominator stays
positive there because |mu1 + mu2| <= 0.8 < 1.
"""

from __future__ import annotations

import numpy as np

__all__ = ["toy_eval", "toy_spatial_grid", "toy_parameter_grid", "toy_snapshots"]

SPATIAL_POINTS_PER_AXIS = 50
PARAMETER_POINTS_PER_AXIS = 40


def toy_eval(x1, x2, mu):
    """Evaluate the toy function; broadcasts over array-valued arguments."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    mu = np.asarray(mu, dtype=float)
    mu1, mu2 = mu[..., 0], mu[..., 1]
    if np.any(np.abs(x1) > 1) or np.any(np.abs(x2) > 1):
        raise ValueError("spatial point outside [-1, 1]^2")
    if np.any(np.abs(mu) > 0.4):
        raise ValueError("parameter outside [-0.4, 0.4]^2")
    phase = 0.5 * np.pi * (x1 + 1.0)
    amp = mu2 - mu1 - (mu1 + mu2) * x2
    numer = 1.0 + 0.25 * np.pi**2 * amp**2 * np.sin(phase) ** 2
    denom = 1.0 + (mu1 + mu2) * np.cos(phase)
    return numer / denom


def toy_spatial_grid():
    """(2500, 2) grid points on [-1, 1]^2, x1 varying fastest."""
    axis = np.linspace(-1.0, 1.0, SPATIAL_POINTS_PER_AXIS)
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([x1.ravel(order="F"), x2.ravel(order="F")])


def toy_parameter_grid():
    """(1600, 2) grid points on [-0.4, 0.4]^2, mu1 varying fastest."""
    axis = np.linspace(-0.4, 0.4, PARAMETER_POINTS_PER_AXIS)
    m1, m2 = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([m1.ravel(order="F"), m2.ravel(order="F")])


def toy_snapshots():
    """Snapshot matrix with one spatial point per row and one parameter per
    column (2500 x 1600)."""
    pts = toy_spatial_grid()
    mus = toy_parameter_grid()
    return toy_eval(pts[:, 0][:, None], pts[:, 1][:, None], mus[None, :, :])
