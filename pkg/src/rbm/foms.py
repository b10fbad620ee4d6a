"""Parametric full-order models in one-step update form.

Every benchmark is expressed as

    E(mu) x^k = A(mu) x^{k-1} + f(x^{k-1}, mu) + B u^{k-1},   y^k = C x^k,

with E and A affine in the parameter: E(mu) = sum_i e_coef_i(mu) * E_i and
likewise for A. An IMEX step for a convection-diffusion problem and an
implicit Euler step for a linear parabolic problem both fit this form once
the time step is folded into the operator coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["AffineOperator", "Nonlinearity", "ParametricFOM", "Trajectory", "solve_fom"]


@dataclass(frozen=True)
class AffineOperator:
    """Sum of fixed sparse matrices with parameter-dependent coefficients."""

    matrices: Sequence[sp.spmatrix]
    coefficients: Sequence[Callable[[np.ndarray], float]]

    def assemble(self, mu):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        out = None
        for mat, coef in zip(self.matrices, self.coefficients):
            term = coef(mu) * mat
            out = term if out is None else out + term
        return out.tocsc()

    def __len__(self):
        return len(self.matrices)


class Nonlinearity:
    """Interface for the state nonlinearity with masked evaluation support.

    ``full`` evaluates all components for one state vector or column-wise
    for a matrix of states. ``stencil`` returns the state indices needed to
    evaluate the components listed in ``rows``; ``masked`` evaluates exactly
    those components from the stencil values.
    """

    def full(self, x, mu):
        raise NotImplementedError

    def stencil(self, rows):
        raise NotImplementedError

    def masked(self, x_stencil, rows, mu):
        raise NotImplementedError


@dataclass(frozen=True)
class Trajectory:
    """States (n x N_t) and outputs (q x N_t) of one transient solve."""

    states: np.ndarray
    outputs: np.ndarray

    @property
    def num_steps(self):
        return self.states.shape[1]


@dataclass(frozen=True)
class ParametricFOM:
    dimension: int
    e_operator: AffineOperator
    a_operator: AffineOperator
    input_map: np.ndarray        # n x m
    output_map: np.ndarray       # q x n
    input_signal: Callable[[int, np.ndarray], np.ndarray]  # step index -> (m,)
    dt: float
    num_steps: int               # K; trajectory has K+1 columns
    nonlinearity: Nonlinearity | None = None
    steady: bool = False
    parameter_box: np.ndarray = None
    state_check: Callable[[np.ndarray, int, np.ndarray], None] = None
    mass_matrix: sp.spmatrix = None   # E of the time-continuous form, for reference
    labels: dict = field(default_factory=dict)

    @property
    def num_outputs(self):
        return self.output_map.shape[0]

    @property
    def num_inputs(self):
        return self.input_map.shape[1]

    @property
    def time_grid(self):
        return self.dt * np.arange(self.num_steps + 1)

    def check_parameter(self, mu):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if self.parameter_box is not None:
            box = np.asarray(self.parameter_box)
            if mu.shape[0] != box.shape[0]:
                raise ValueError(f"expected {box.shape[0]} parameter components, got {mu.shape[0]}")
            if np.any(mu < box[:, 0]) or np.any(mu > box[:, 1]):
                raise ValueError(f"parameter {mu} outside the declared domain box")
        return mu


def solve_fom(fom: ParametricFOM, mu) -> Trajectory:
    """Time-march the full-order model at one parameter.

    The implicit operator E(mu) is factorized once and reused for every
    step. Steady problems solve a single linear system.
    """
    mu = fom.check_parameter(mu)
    e_mat = fom.e_operator.assemble(mu)
    try:
        solve = spla.factorized(e_mat)
    except RuntimeError as err:
        raise RuntimeError(f"singular implicit operator at mu={mu}") from err

    b = np.asarray(fom.input_map, dtype=float)
    c = np.asarray(fom.output_map, dtype=float)

    if fom.steady:
        rhs = b @ np.atleast_1d(fom.input_signal(0, mu))
        x = solve(rhs)
        states = x[:, None]
        return Trajectory(states=states, outputs=c @ states)

    a_mat = fom.a_operator.assemble(mu)
    n, k_steps = fom.dimension, fom.num_steps
    states = np.zeros((n, k_steps + 1))
    x = np.zeros(n)
    for k in range(1, k_steps + 1):
        rhs = a_mat @ x + b @ np.atleast_1d(fom.input_signal(k - 1, mu))
        if fom.nonlinearity is not None:
            rhs = rhs + fom.nonlinearity.full(x, mu)
        x = solve(rhs)
        if not np.all(np.isfinite(x)):
            raise RuntimeError(f"non-finite state at mu={mu}, step {k}")
        if fom.state_check is not None:
            fom.state_check(x, k, mu)
        states[:, k] = x
    return Trajectory(states=states, outputs=c @ states)
