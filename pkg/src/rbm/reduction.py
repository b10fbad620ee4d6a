"""Galerkin reduction, hyper-reduction, and error metrics.

The reduced model mirrors the full model's one-step update form: every
affine operator piece is projected once, parameter coefficients are applied
at solve time, and the nonlinearity (when present) is evaluated only at the
selected interpolation stencil. The residual of the reduced trajectory in
the full-order equation drives the greedy error indicator; its norm is
evaluated through a precomputed thin-QR factor of the stacked operator
blocks, so the per-parameter cost never scales with the full dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .foms import ParametricFOM, Trajectory, solve_fom
from .kernels import orthonormalize_against, svd
from .sampling import TrainingSet
from .selectors import InterpolationSelection

__all__ = [
    "ReducedBasis",
    "RomOperators",
    "OutputSnapshotMatrix",
    "ErrorEstimate",
    "galerkin_project",
    "rom_solve",
    "pod_enrich",
    "assemble_output_matrix",
    "error_indicator",
    "estimate_errors",
    "output_errors",
    "true_output_error",
]


@dataclass(frozen=True)
class ReducedBasis:
    """Orthonormal basis of the reduced subspace (n x r)."""

    matrix: np.ndarray

    @classmethod
    def empty(cls, n):
        return cls(np.empty((n, 0)))

    @property
    def r(self):
        return self.matrix.shape[1]

    @property
    def n(self):
        return self.matrix.shape[0]

    def orthonormality_defect(self):
        if self.r == 0:
            return 0.0
        gram = self.matrix.T @ self.matrix
        return float(np.max(np.abs(gram - np.eye(self.r))))


@dataclass(frozen=True)
class _HyperReduction:
    selection: InterpolationSelection
    interp: np.ndarray          # (ell x m) inverse or pseudoinverse of the selected rows
    h_matrix: np.ndarray        # (r x m) maps masked values to the projected update
    stencil: np.ndarray
    evaluate: callable          # masked evaluator over stencil values
    v_stencil: np.ndarray       # (len(stencil) x r)


@dataclass(frozen=True)
class RomOperators:
    """Projected operators plus everything the indicator needs."""

    basis: ReducedBasis
    e_terms: np.ndarray          # (n_e, r, r)
    e_coefs: tuple
    a_terms: np.ndarray          # (n_a, r, r)
    a_coefs: tuple
    b_r: np.ndarray              # (r, m)
    c_r: np.ndarray              # (q, r)
    dt: float
    num_steps: int
    steady: bool
    hyper: _HyperReduction | None
    residual_factor: np.ndarray  # thin-QR R of the stacked residual blocks
    output_norm: float           # spectral norm of the full output map

    @property
    def r(self):
        return self.basis.r


@dataclass(frozen=True)
class OutputSnapshotMatrix:
    """Row-per-parameter snapshot matrix of output trajectories.

    Column blocks are ordered by time instant, with the output components
    contiguous inside each block. ``source`` records whether rows came from
    full-order or reduced-order solves.
    """

    matrix: np.ndarray
    source: str   # 'true' | 'approximate'
    stride: int


@dataclass(frozen=True)
class ErrorEstimate:
    value: float
    breakdown: np.ndarray


def _project_terms(op, v):
    terms = [v.T @ (mat @ v) for mat in op.matrices]
    arr = np.array(terms) if terms else np.empty((0, v.shape[1], v.shape[1]))
    return arr, tuple(op.coefficients)


def _residual_blocks(fom, v, hyper):
    blocks = [mat @ v for mat in fom.e_operator.matrices]
    blocks += [mat @ v for mat in fom.a_operator.matrices]
    if hyper is not None:
        blocks.append(hyper.selection.basis)
    blocks.append(np.asarray(fom.input_map, dtype=float))
    stacked = np.hstack(blocks)
    return np.linalg.qr(stacked, mode="r")


def galerkin_project(fom: ParametricFOM, basis: ReducedBasis,
                     selection: InterpolationSelection | None = None) -> RomOperators:
    """Project every affine piece of the model onto the basis.

    With a selection, the hyper-reduction operator and the evaluation
    stencil are precomputed so that the online nonlinearity cost depends
    only on the number of interpolation points.
    """
    v = basis.matrix
    if v.shape[0] != fom.dimension:
        raise ValueError(f"basis rows {v.shape[0]} do not match model dimension {fom.dimension}")
    e_terms, e_coefs = _project_terms(fom.e_operator, v)
    a_terms, a_coefs = _project_terms(fom.a_operator, v)
    b_r = v.T @ np.asarray(fom.input_map, dtype=float)
    c_r = np.asarray(fom.output_map, dtype=float) @ v

    hyper = None
    if selection is not None:
        if fom.nonlinearity is None:
            raise ValueError("selection given but the model has no nonlinearity")
        u = selection.basis
        u_sel = u[selection.indices]
        if u_sel.shape[0] == u_sel.shape[1]:
            interp = np.linalg.inv(u_sel)
        else:
            interp = np.linalg.pinv(u_sel)
        h_matrix = (v.T @ u) @ interp
        stencil, evaluate = fom.nonlinearity.plan(selection.indices)
        hyper = _HyperReduction(
            selection=selection, interp=interp, h_matrix=h_matrix,
            stencil=stencil, evaluate=evaluate, v_stencil=v[stencil],
        )

    factor = _residual_blocks(fom, v, hyper)
    return RomOperators(
        basis=basis, e_terms=e_terms, e_coefs=e_coefs,
        a_terms=a_terms, a_coefs=a_coefs, b_r=b_r, c_r=c_r,
        dt=fom.dt, num_steps=fom.num_steps, steady=fom.steady, hyper=hyper,
        residual_factor=factor,
        output_norm=float(np.linalg.norm(np.asarray(fom.output_map, dtype=float), 2)),
    )


def _assemble(terms, coefs, mu):
    r = terms.shape[1] if terms.size else terms.shape[1]
    out = np.zeros((r, r))
    for mat, coef in zip(terms, coefs):
        out += coef(mu) * mat
    return out


def rom_solve(rom: RomOperators, fom: ParametricFOM, mu) -> Trajectory:
    """Time-march the reduced model at one parameter (LU-accurate path).

    Returns the reduced trajectory: states are the coefficient vectors z,
    outputs are C_r z.
    """
    mu = fom.check_parameter(mu)
    r = rom.r
    e_mat = _assemble(rom.e_terms, rom.e_coefs, mu)
    a_mat = _assemble(rom.a_terms, rom.a_coefs, mu)

    if rom.steady:
        rhs = rom.b_r @ np.atleast_1d(fom.input_signal(0, mu))
        z = sla.lu_solve(sla.lu_factor(e_mat), rhs) if r else np.zeros(0)
        states = z[:, None]
        return Trajectory(states=states, outputs=rom.c_r @ states)

    k_steps = rom.num_steps
    states = np.zeros((r, k_steps + 1))
    z = np.zeros(r)
    lu = sla.lu_factor(e_mat) if r else None
    for k in range(1, k_steps + 1):
        rhs = a_mat @ z + rom.b_r @ np.atleast_1d(fom.input_signal(k - 1, mu))
        if fom.nonlinearity is not None:
            if rom.hyper is not None:
                f_sel = rom.hyper.evaluate(rom.hyper.v_stencil @ z, mu)
                rhs = rhs + rom.hyper.h_matrix @ f_sel
            else:
                rhs = rhs + rom.basis.matrix.T @ fom.nonlinearity.full(rom.basis.matrix @ z, mu)
        z = sla.lu_solve(lu, rhs) if r else z
        states[:, k] = z
    return Trajectory(states=states, outputs=rom.c_r @ states)


def _batch_sweep(rom: RomOperators, fom: ParametricFOM, mus, *,
                 need_residual=False, collect_outputs=False, stride=1):
    """Step the reduced model at many parameters simultaneously.

    Returns (outputs, deltas): outputs is (P, q, T_sub) or None, deltas is
    the (P,) vector of residual-based error indicators or None. Uses
    explicit inverses of the per-parameter implicit operators; intended for
    ranking sweeps and snapshot assembly, not for final validation solves.
    """
    mus = np.atleast_2d(np.asarray(mus, dtype=float))
    p_count = mus.shape[0]
    r = rom.r
    q = rom.c_r.shape[0]
    k_steps = rom.num_steps

    ec = np.array([[c(mu) for c in rom.e_coefs] for mu in mus])  # (P, n_e)
    ac = np.array([[c(mu) for c in rom.a_coefs] for mu in mus])  # (P, n_a)
    e_stack = np.einsum("pi,irs->prs", ec, rom.e_terms) if r else np.zeros((p_count, 0, 0))
    a_stack = np.einsum("pi,irs->prs", ac, rom.a_terms) if r else np.zeros((p_count, 0, 0))
    e_inv = np.linalg.inv(e_stack) if r else e_stack

    u_sig = np.array([np.atleast_1d(fom.input_signal(0, mu)) for mu in mus])  # (P, m)
    rhs_b = u_sig @ rom.b_r.T  # (P, r)

    if rom.steady:
        z = np.einsum("prs,ps->pr", e_inv, rhs_b)
        outputs = (z @ rom.c_r.T)[:, :, None] if collect_outputs else None
        deltas = None
        if need_residual:
            n_a = len(rom.a_coefs)
            w = np.concatenate([
                (ec[:, :, None] * z[:, None, :]).reshape(p_count, -1),
                np.zeros((p_count, n_a * r)),
                -u_sig,
            ], axis=1)
            norms = np.linalg.norm(w @ rom.residual_factor.T, axis=1)
            deltas = norms * rom.output_norm
        return outputs, deltas

    time_cols = np.arange(0, k_steps + 1, stride)
    outputs = np.zeros((p_count, q, time_cols.size)) if collect_outputs else None
    col_of = {int(k): j for j, k in enumerate(time_cols)}

    hyper = rom.hyper if fom.nonlinearity is not None else None
    res_sum = np.zeros(p_count)

    z = np.zeros((p_count, r))
    for k in range(1, k_steps + 1):
        rhs = np.einsum("prs,ps->pr", a_stack, z) + rhs_b
        alpha = None
        if hyper is not None:
            f_sel = hyper.evaluate(z @ hyper.v_stencil.T)
            rhs = rhs + f_sel @ hyper.h_matrix.T
            alpha = f_sel @ hyper.interp.T  # (P, ell of basis columns)
        z_new = np.einsum("prs,ps->pr", e_inv, rhs)
        if need_residual:
            parts = [ (ec[:, :, None] * z_new[:, None, :]).reshape(p_count, -1),
                      (-ac[:, :, None] * z[:, None, :]).reshape(p_count, -1) ]
            if hyper is not None:
                parts.append(-alpha)
            elif fom.nonlinearity is not None:
                raise ValueError("residual indicator needs a hyper-reduction selection "
                                 "for nonlinear models")
            parts.append(-u_sig)
            w = np.concatenate(parts, axis=1)
            res_sum += np.linalg.norm(w @ rom.residual_factor.T, axis=1)
        z = z_new
        if collect_outputs and k in col_of:
            outputs[:, :, col_of[k]] = z @ rom.c_r.T

    deltas = res_sum / (k_steps + 1) * rom.output_norm if need_residual else None
    return outputs, deltas


def pod_enrich(basis: ReducedBasis, snapshots, r_pod: int):
    """Enrich the basis with leading left singular vectors of the projected
    out snapshot matrix.

    Directions whose singular value falls below 1e-12 * (||X||_F + 1) are
    dropped, as are directions deflated during re-orthonormalization.
    Returns (new_basis, dropped_count).
    """
    if r_pod < 1:
        raise ValueError("r_pod must be at least 1")
    x = snapshots.states if isinstance(snapshots, Trajectory) else np.asarray(snapshots, dtype=float)
    v = basis.matrix
    if v.shape[1]:
        xbar = x - v @ (v.T @ x)
    else:
        xbar = x
    res = svd(xbar)
    floor = 1e-12 * (np.linalg.norm(x) + 1.0)
    keep = min(r_pod, int(np.sum(res.singular_values > floor)))
    dropped = r_pod - keep
    if keep == 0:
        return basis, dropped
    new_v, extra_dropped = orthonormalize_against(v, res.left_vectors[:, :keep])
    return ReducedBasis(new_v), dropped + extra_dropped


def assemble_output_matrix(fom: ParametricFOM, solver, train: TrainingSet,
                           stride: int = 1) -> OutputSnapshotMatrix:
    """One solve per training parameter, outputs subsampled every ``stride``
    steps (the initial instant is always included).

    ``solver`` is either the string ``"fom"`` for full-order rows or a
    ``RomOperators`` for reduced-order rows. For steady single-output models
    the rows carry the (lifted) state instead, following the steady variant
    of the construction.
    """
    if stride < 1:
        raise ValueError("stride must be at least 1")
    time_cols = np.arange(0, fom.num_steps + 1, stride)
    use_fom = isinstance(solver, str)
    if use_fom and solver != "fom":
        raise ValueError(f"unknown solver tag {solver!r}")

    steady_state_rows = fom.steady and fom.num_outputs == 1
    rows = []
    if use_fom:
        for i, mu in enumerate(train.samples):
            try:
                traj = solve_fom(fom, mu)
            except Exception as err:
                raise RuntimeError(f"full-order solve failed at training index {i}") from err
            if steady_state_rows:
                rows.append(traj.states[:, 0])
            else:
                rows.append(traj.outputs[:, time_cols].ravel(order="F"))
    else:
        rom: RomOperators = solver
        if steady_state_rows:
            for mu in train.samples:
                rows.append(rom.basis.matrix @ rom_solve(rom, fom, mu).states[:, 0])
        else:
            outputs, _ = _batch_sweep(rom, fom, train.samples, collect_outputs=True, stride=stride)
            rows = [outputs[i].ravel(order="F") for i in range(len(train))]
    matrix = np.array(rows)
    return OutputSnapshotMatrix(matrix=matrix, source="true" if use_fom else "approximate",
                                stride=stride)


def _mean_output_error(y_true, y_red):
    diff = np.linalg.norm(y_true - y_red, axis=0)
    return float(diff.sum() / diff.size)


def error_indicator(rom: RomOperators, fom: ParametricFOM, mu,
                    mode: str = "residual") -> ErrorEstimate:
    """Cheap surrogate for the output error of the reduced model at ``mu``.

    The residual mode averages the full-order residual norms of the reduced
    trajectory over the time grid and scales by the output-map norm. The
    true-error mode solves the full model and reports the exact
    time-averaged output error.
    """
    mu = fom.check_parameter(mu)
    if mode == "true-error":
        y = solve_fom(fom, mu).outputs
        yr = rom_solve(rom, fom, mu).outputs
        diff = np.linalg.norm(y - yr, axis=0)
        return ErrorEstimate(value=float(diff.sum() / diff.size), breakdown=diff)
    if mode != "residual":
        raise ValueError(f"unknown indicator mode {mode!r}")
    traj = rom_solve(rom, fom, mu)
    if fom.nonlinearity is not None and rom.hyper is None:
        breakdown = _full_space_residual_norms(rom, fom, mu, traj)
    else:
        breakdown = _factored_residual_norms(rom, fom, mu, traj)
    denom = 1.0 if rom.steady else rom.num_steps + 1
    return ErrorEstimate(value=float(breakdown.sum() / denom * rom.output_norm),
                         breakdown=breakdown)


def _factored_residual_norms(rom, fom, mu, traj):
    """Per-step residual norms through the thin-QR factor of the blocks."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    n_e, n_a, r = len(rom.e_coefs), len(rom.a_coefs), rom.r
    if rom.steady:
        z = traj.states[:, 0]
        w = np.concatenate([np.concatenate([c(mu) * z for c in rom.e_coefs]) if r else np.zeros(0),
                            np.zeros(n_a * r),
                            -np.atleast_1d(fom.input_signal(0, mu))])
        return np.array([np.linalg.norm(rom.residual_factor @ w)])
    norms = np.zeros(rom.num_steps)
    hyper = rom.hyper if fom.nonlinearity is not None else None
    for k in range(1, rom.num_steps + 1):
        z_new, z_old = traj.states[:, k], traj.states[:, k - 1]
        parts = [np.concatenate([c(mu) * z_new for c in rom.e_coefs]) if r else np.zeros(n_e * r),
                 np.concatenate([-c(mu) * z_old for c in rom.a_coefs]) if r else np.zeros(n_a * r)]
        if hyper is not None:
            f_sel = hyper.evaluate(hyper.v_stencil @ z_old, mu)
            parts.append(-(hyper.interp @ f_sel))
        parts.append(-np.atleast_1d(fom.input_signal(k - 1, mu)))
        w = np.concatenate(parts)
        norms[k - 1] = np.linalg.norm(rom.residual_factor @ w)
    return norms


def _full_space_residual_norms(rom, fom, mu, traj):
    """Residual norms assembled in the full space; only used when a nonlinear
    model is reduced without hyper-reduction (diagnostics, exactness tests)."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    v = rom.basis.matrix
    x = v @ traj.states
    e_mat = fom.e_operator.assemble(mu)
    a_mat = fom.a_operator.assemble(mu)
    b = np.asarray(fom.input_map, dtype=float)
    norms = np.zeros(rom.num_steps)
    for k in range(1, rom.num_steps + 1):
        rho = e_mat @ x[:, k] - a_mat @ x[:, k - 1] - b @ np.atleast_1d(fom.input_signal(k - 1, mu))
        rho -= fom.nonlinearity.full(x[:, k - 1], mu)
        norms[k - 1] = np.linalg.norm(rho)
    return norms


def estimate_errors(rom: RomOperators, fom: ParametricFOM, train: TrainingSet,
                    mode: str = "residual", fom_outputs=None):
    """Indicator values over a whole training set (vectorized sweep).

    ``fom_outputs`` optionally maps training row index to precomputed
    full-order outputs; it is consulted (and filled) in true-error mode only.
    """
    if mode == "residual":
        _, deltas = _batch_sweep(rom, fom, train.samples, need_residual=True)
        return deltas
    if mode != "true-error":
        raise ValueError(f"unknown indicator mode {mode!r}")
    values = np.zeros(len(train))
    for i, mu in enumerate(train.samples):
        if fom_outputs is not None and i in fom_outputs:
            y = fom_outputs[i]
        else:
            y = solve_fom(fom, mu).outputs
            if fom_outputs is not None:
                fom_outputs[i] = y
        yr = rom_solve(rom, fom, mu).outputs
        values[i] = _mean_output_error(y, yr)
    return values


def output_errors(fom: ParametricFOM, rom: RomOperators, test: TrainingSet):
    """Time-averaged output error for every parameter of a test set."""
    errs = np.zeros(len(test))
    for i, mu in enumerate(test.samples):
        y = solve_fom(fom, mu).outputs
        yr = rom_solve(rom, fom, mu).outputs
        errs[i] = _mean_output_error(y, yr)
    return errs


def true_output_error(fom: ParametricFOM, rom: RomOperators, test: TrainingSet) -> float:
    """Maximum over the test set of the time-averaged output error."""
    return float(np.max(output_errors(fom, rom, test)))
