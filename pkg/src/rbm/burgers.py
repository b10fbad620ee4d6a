"""1-D viscous Burgers benchmark.

Finite differences on [0, 1] with homogeneous Dirichlet at the left end and
a one-sided first-order Neumann closure at the right end. Diffusion uses the
second-order central stencil and convection a first-order backward (upwind)
difference, valid for the non-negative states this forced problem produces.
Time marching is first-order IMEX: diffusion implicit, convection explicit.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .foms import AffineOperator, Nonlinearity, ParametricFOM, Trajectory, solve_fom

__all__ = ["BurgersConvection", "build_burgers", "solve_burgers"]

PARAMETER_BOX = np.array([[0.005, 1.0]])


class BurgersConvection(Nonlinearity):
    """Upwind convection term -x * (x - x_prev) / dw, scaled by dt.

    The left neighbour of the first unknown is the eliminated Dirichlet
    node, so x_prev there is zero.
    """

    def __init__(self, n, dw, dt):
        self.n = n
        self.dw = dw
        self.dt = dt

    def full(self, x, mu=None):
        x = np.asarray(x, dtype=float)
        prev = np.zeros_like(x)
        prev[1:] = x[:-1]
        return -self.dt * x * (x - prev) / self.dw

    def stencil(self, rows):
        rows = np.asarray(rows, dtype=int)
        ext = np.union1d(rows, rows[rows > 0] - 1)
        return ext

    def plan(self, rows):
        rows = np.asarray(rows, dtype=int)
        ext = self.stencil(rows)
        pos = np.searchsorted(ext, rows)
        has_prev = rows > 0
        pos_prev = np.searchsorted(ext, np.maximum(rows - 1, 0))
        dt, dw = self.dt, self.dw

        def evaluate(x_stencil, mu=None):
            xs = np.asarray(x_stencil, dtype=float)
            xj = xs[..., pos]
            xp = np.where(has_prev, xs[..., pos_prev], 0.0)
            return -dt * xj * (xj - xp) / dw

        return ext, evaluate

    def masked(self, x_stencil, rows, mu=None):
        _, evaluate = self.plan(rows)
        return evaluate(x_stencil, mu)


def _diffusion_matrix(n, dw):
    main = np.full(n, -2.0)
    main[-1] = -1.0  # ghost equality x_{n+1} = x_n folds into the last row
    off = np.ones(n - 1)
    return sp.diags([off, main, off], offsets=[-1, 0, 1], format="csc") / dw**2


def build_burgers(n: int, delta_t: float, horizon: float) -> ParametricFOM:
    """Discretized Burgers model with unknowns at w_j = j/n, j = 1..n.

    Unit forcing acts on every node, the scalar output is the state at
    w = 1, and the initial condition is zero. The viscosity multiplies the
    diffusion operator at solve time.
    """
    if n < 3:
        raise ValueError(f"need at least 3 unknowns, got n={n}")
    if delta_t <= 0 or horizon <= 0:
        raise ValueError("time step and horizon must be positive")
    dw = 1.0 / n
    k_steps = int(round(horizon / delta_t))
    a_diff = _diffusion_matrix(n, dw)
    eye = sp.identity(n, format="csc")

    # implicit side (I - dt*mu*A_diff), explicit side I, forcing dt per step
    e_op = AffineOperator(
        matrices=[eye, a_diff],
        coefficients=[lambda mu: 1.0, lambda mu, dt=delta_t: -dt * mu[0]],
    )
    a_op = AffineOperator(matrices=[eye], coefficients=[lambda mu: 1.0])
    b = delta_t * np.ones((n, 1))
    c = np.zeros((1, n))
    c[0, -1] = 1.0

    def non_negative(x, k, mu):
        floor = -1e-10 * (1.0 + float(np.max(np.abs(x))))
        if x.min() < floor:
            raise RuntimeError(
                f"upwind direction violated: negative state {x.min():.3e} at mu={mu}, step {k}"
            )

    return ParametricFOM(
        dimension=n,
        e_operator=e_op,
        a_operator=a_op,
        input_map=b,
        output_map=c,
        input_signal=lambda k, mu: np.ones(1),
        dt=delta_t,
        num_steps=k_steps,
        nonlinearity=BurgersConvection(n, dw, delta_t),
        parameter_box=PARAMETER_BOX,
        state_check=non_negative,
        labels={"benchmark": "burgers", "diffusion": "central", "convection": "upwind"},
    )


def solve_burgers(fom: ParametricFOM, mu) -> Trajectory:
    """IMEX time march at one viscosity; the factorization is reused across steps."""
    return solve_fom(fom, mu)
