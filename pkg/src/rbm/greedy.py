"""Greedy basis construction with optional training-set subsampling.

Three drivers share one iteration engine: the fixed-set loop, the
coarse-tolerance two-stage scheme, and the selection-stagnation two-stage
scheme. Each iteration solves the full model at the current pick, enriches
the basis with leading directions of the projected-out snapshots (adaptively
many, more when the estimated error is far from the target), rebuilds the
reduced operators, and re-estimates the error over the active training set.
For nonlinear models an interpolation basis for the nonlinearity is grown
from the same snapshot solves and drives the hyper-reduction.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .foms import ParametricFOM, solve_fom
from .kernels import rank_from_energy, svd
from .reduction import (OutputSnapshotMatrix, ReducedBasis, RomOperators,
                        assemble_output_matrix, estimate_errors, galerkin_project,
                        pod_enrich, _batch_sweep)
from .sampling import TrainingSet
from .selectors import (InterpolationSelection, deim, deim_indices, gappy_clustering,
                        gappy_eigenvector, kdeim, qdeim, qr_pivot_select,
                        subsample_training_set)

__all__ = [
    "GreedyConfig",
    "GreedyRecord",
    "GreedyTrace",
    "adaptive_mode_count",
    "stagnation_check",
    "pod_greedy_fixed",
    "scheme1",
    "scheme2",
]

SELECTOR_KINDS = ("qr", "deim", "qdeim", "kdeim", "gappy-eig", "gappy-clust")


@dataclass(frozen=True)
class GreedyConfig:
    tol: float
    tol_coarse: float = 1.0
    eps_svd: float = 1e-6
    eps_qr: float = 1e-6
    selector: str = "qdeim"
    oversample: float = 2.0
    max_iterations: int = 200
    stride: int = 1
    seed: int = 0
    indicator: str = "residual"      # residual | true-error
    ei_eps: float = 1e-10            # energy cut for the nonlinearity basis

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.selector not in SELECTOR_KINDS:
            raise ValueError(f"unknown selector {self.selector!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class GreedyRecord:
    iteration: int
    stage: int
    mu: tuple
    delta: float
    r_pod_added: int
    r_cum: int
    wall_s: float


@dataclass
class GreedyTrace:
    records: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    offline_seconds: float = 0.0
    r_ei: int = 0
    seed: int = 0
    flags: list = field(default_factory=list)
    subsampled: TrainingSet | None = None
    selection: InterpolationSelection | None = None
    switch_iteration: int | None = None
    final_rom: RomOperators | None = None

    def selected_parameters(self):
        return np.array([rec.mu for rec in self.records])


def adaptive_mode_count(delta_star: float, tol: float) -> int:
    """Number of snapshot directions to add, clamped to [1, 5]; grows with
    the decade gap between the current error level and the target."""
    if delta_star <= 0 or tol <= 0:
        raise ValueError("delta_star and tol must be positive")
    return int(min(5, max(1, math.ceil(math.log10(delta_star / tol)))))


def stagnation_check(prev: InterpolationSelection | None,
                     curr: InterpolationSelection) -> bool:
    """True when two consecutive selections have the same cardinality."""
    return prev is not None and len(prev) == len(curr)


def run_selector(cfg: GreedyConfig, ytilde: OutputSnapshotMatrix,
                 seed: int) -> InterpolationSelection:
    """Dispatch the configured parameter selector on an output snapshot matrix."""
    y = ytilde.matrix
    try:
        if cfg.selector == "qr":
            return qr_pivot_select(y, cfg.eps_qr)
        if cfg.selector == "deim":
            return deim(y, cfg.eps_svd)
        if cfg.selector == "qdeim":
            return qdeim(y, cfg.eps_svd)
        if cfg.selector == "kdeim":
            return kdeim(y, cfg.eps_svd, seed=seed)
        if cfg.selector == "gappy-eig":
            base = deim(y, cfg.eps_svd)
            m = min(int(math.ceil(cfg.oversample * len(base))), y.shape[0])
            return gappy_eigenvector(base, m)
        if cfg.selector == "gappy-clust":
            ell = rank_from_energy(svd(y).singular_values, cfg.eps_svd)
            m = min(int(math.ceil(cfg.oversample * ell)), y.shape[0])
            return gappy_clustering(y, cfg.eps_svd, m, seed=seed)
    except ValueError as err:
        raise RuntimeError("selector returned no indices") from err
    raise ValueError(f"unknown selector {cfg.selector!r}")


class _Engine:
    """Shared per-iteration mechanics of the greedy drivers."""

    def __init__(self, fom: ParametricFOM, cfg: GreedyConfig):
        self.fom = fom
        self.cfg = cfg
        self.basis = ReducedBasis.empty(fom.dimension)
        self.rom = None
        self.ei_u = None
        self.ei_s = None
        self.ei_selection = None
        self.fom_cache = {}
        self.trace = GreedyTrace(seed=cfg.seed)
        self.last_solved = None
        self.last_added = None
        self.forced_pick = False

    # -- nonlinearity interpolation basis -------------------------------
    def _update_ei(self, states):
        f_new = self.fom.nonlinearity.full(states, None)
        if self.ei_u is None:
            pool = f_new
        else:
            pool = np.hstack([self.ei_u * self.ei_s, f_new])
        res = svd(pool)
        keep = int(np.sum(res.singular_values > 1e-13 * res.singular_values[0]))
        keep = max(keep, 1)
        self.ei_u = res.left_vectors[:, :keep]
        self.ei_s = res.singular_values[:keep]
        r_ei = rank_from_energy(self.ei_s, self.cfg.ei_eps)
        u = self.ei_u[:, :r_ei]
        self.ei_selection = InterpolationSelection(u, deim_indices(u), "deim",
                                                   self.ei_s[:r_ei])
        self.trace.r_ei = r_ei

    # -- one greedy iteration --------------------------------------------
    def solve_and_enrich(self, mu, delta_star):
        traj = solve_fom(self.fom, mu)
        if self.fom.steady:
            r_pod = 1
        else:
            r_pod = adaptive_mode_count(delta_star, self.cfg.tol)
        before = self.basis.r
        self.basis, _ = pod_enrich(self.basis, traj, r_pod)
        added = self.basis.r - before
        if self.fom.nonlinearity is not None:
            self._update_ei(traj.states)
        self.rom = galerkin_project(self.fom, self.basis, self.ei_selection)
        return added

    def estimate(self, train: TrainingSet):
        return estimate_errors(self.rom, self.fom, train, mode=self.cfg.indicator,
                               fom_outputs=self.fom_cache if self.cfg.indicator == "true-error" else None)

    def sweep_with_outputs(self, train: TrainingSet, stride: int):
        """Error estimates plus the approximate output rows in one pass."""
        if self.cfg.indicator == "residual":
            outputs, deltas = _batch_sweep(self.rom, self.fom, train.samples,
                                           need_residual=True, collect_outputs=True,
                                           stride=stride)
            rows = np.array([outputs[i].ravel(order="F") for i in range(len(train))])
            ytilde = OutputSnapshotMatrix(rows, "approximate", stride)
            return deltas, ytilde
        deltas = self.estimate(train)
        ytilde = assemble_output_matrix(self.fom, self.rom, train, stride)
        return deltas, ytilde

    def pick_next(self, deltas, current_idx):
        """argmax pick with the livelock guard for fully deflated re-picks."""
        order = np.argsort(deltas)
        best = int(order[-1])
        if best == current_idx and self.last_added == 0 and len(deltas) > 1:
            if self.forced_pick:
                return None  # second forced pick in a row: stagnation
            self.forced_pick = True
            return int(order[-2])
        self.forced_pick = False
        return best

    def record(self, iteration, stage, mu, delta, added, wall):
        self.trace.records.append(GreedyRecord(
            iteration=iteration, stage=stage, mu=tuple(np.atleast_1d(mu)),
            delta=float(delta), r_pod_added=added, r_cum=self.basis.r, wall_s=wall,
        ))
        if added == 0:
            self.trace.flags.append(f"full-deflation@iter{iteration}")

    def finish(self, converged, iterations, t0):
        self.trace.converged = converged
        self.trace.iterations = iterations
        self.trace.offline_seconds = time.perf_counter() - t0
        self.trace.final_rom = self.rom
        return self.basis, self.trace


def _greedy_loop(engine: _Engine, train: TrainingSet, tol: float, *,
                 stage: int, start_iter: int, start_idx: int, start_eps: float,
                 max_iter: int, on_iteration=None):
    """Run solve/enrich/estimate iterations until the estimate over ``train``
    drops below ``tol``. Returns (next_iter, pending_idx, eps, stop_reason).

    ``on_iteration`` may inspect the iteration and return "switch" to break
    out (used by the stagnation criterion of the second scheme).
    """
    it = start_iter
    idx = start_idx
    eps = start_eps
    while eps > tol:
        if it > max_iter:
            return it, idx, eps, "max-iterations"
        t_iter = time.perf_counter()
        mu = train.samples[idx]
        added = engine.solve_and_enrich(mu, eps)
        engine.last_added = added
        if on_iteration is None:
            deltas, signal = engine.estimate(train), None
        else:
            deltas, signal = on_iteration(it)
        nxt = engine.pick_next(deltas, idx)
        eps = float(deltas[nxt]) if nxt is not None else float(np.max(deltas))
        engine.record(it, stage, mu, eps, added, time.perf_counter() - t_iter)
        it += 1
        if nxt is None:
            engine.trace.flags.append("stagnated-selection")
            return it, idx, eps, "stagnated"
        idx = nxt
        if signal == "switch":
            return it, idx, eps, "switch"
    return it, idx, eps, "converged"


def pod_greedy_fixed(fom: ParametricFOM, train: TrainingSet, cfg: GreedyConfig):
    """Greedy loop over a fixed training set until tol or the iteration cap."""
    if len(train) == 0:
        raise ValueError("training set is empty")
    engine = _Engine(fom, cfg)
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    idx = int(rng.integers(len(train)))
    eps = 1.0 + cfg.tol
    it, idx, eps, reason = _greedy_loop(engine, train, cfg.tol, stage=1,
                                        start_iter=1, start_idx=idx, start_eps=eps,
                                        max_iter=cfg.max_iterations)
    return engine.finish(reason == "converged", it - 1, t0)


def _stage2(engine, fine, cfg, selection, it, idx, eps, t0, pending_from_fine):
    try:
        subsampled = subsample_training_set(fine, selection)
    except IndexError as err:
        raise RuntimeError("selector returned indices outside the training set") from err
    engine.trace.subsampled = subsampled
    engine.trace.selection = selection
    engine.trace.switch_iteration = it

    # the parameter pending from stage 1 is solved first, then all further
    # picks come from the subsampled set
    if eps > cfg.tol and it <= cfg.max_iterations:
        t_iter = time.perf_counter()
        mu = fine.samples[idx]
        added = engine.solve_and_enrich(mu, eps)
        engine.last_added = added
        deltas = engine.estimate(subsampled)
        nxt = int(np.argmax(deltas))
        eps = float(deltas[nxt])
        stage_tag = 1 if pending_from_fine else 2
        engine.record(it, stage_tag, mu, eps, added, time.perf_counter() - t_iter)
        it += 1
        idx = nxt
        engine.last_solved = idx
        it, idx, eps, reason = _greedy_loop(engine, subsampled, cfg.tol, stage=2,
                                            start_iter=it, start_idx=idx, start_eps=eps,
                                            max_iter=cfg.max_iterations)
    else:
        reason = "converged" if eps <= cfg.tol else "max-iterations"
    return engine.finish(reason == "converged", it - 1, t0)


def scheme1(fom: ParametricFOM, fine: TrainingSet, cfg: GreedyConfig):
    """Two stages: greedy to a coarse tolerance on the fine set, then select
    and subsample once, then greedy to the target tolerance."""
    if cfg.tol_coarse <= cfg.tol:
        # degenerate configuration: the first stage already reaches the target
        pass
    engine = _Engine(fom, cfg)
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    idx = int(rng.integers(len(fine)))
    eps = 1.0 + cfg.tol
    tol_stage1 = max(cfg.tol_coarse, cfg.tol)
    it, idx, eps, reason = _greedy_loop(engine, fine, tol_stage1, stage=1,
                                        start_iter=1, start_idx=idx, start_eps=eps,
                                        max_iter=cfg.max_iterations)
    if reason != "converged":
        engine.trace.flags.append(f"stage1-{reason}")
        return engine.finish(False, it - 1, t0)
    ytilde = assemble_output_matrix(fom, engine.rom, fine, cfg.stride)
    selection = run_selector(cfg, ytilde, cfg.seed)
    return _stage2(engine, fine, cfg, selection, it, idx, eps, t0,
                   pending_from_fine=True)


def scheme2(fom: ParametricFOM, fine: TrainingSet, cfg: GreedyConfig):
    """Two stages with an automatic switch: the selector runs at every
    iteration of stage 1, and the switch happens when the selection size
    stops changing between consecutive iterations."""
    engine = _Engine(fom, cfg)
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    idx = int(rng.integers(len(fine)))
    eps = 1.0 + cfg.tol
    fallback_at = max(2, cfg.max_iterations // 2)
    selections = {}

    def per_iteration(it):
        deltas, ytilde = engine.sweep_with_outputs(fine, cfg.stride)
        selections[it] = run_selector(cfg, ytilde, cfg.seed)
        if it >= 2 and stagnation_check(selections.get(it - 1), selections[it]):
            return deltas, "switch"
        if it >= fallback_at:
            engine.trace.flags.append("stagnation-fallback")
            return deltas, "switch"
        return deltas, None

    it, idx, eps, reason = _greedy_loop(engine, fine, cfg.tol, stage=1,
                                        start_iter=1, start_idx=idx, start_eps=eps,
                                        max_iter=cfg.max_iterations,
                                        on_iteration=per_iteration)
    if reason == "converged":
        engine.trace.flags.append("converged-in-stage1")
        return engine.finish(True, it - 1, t0)
    if reason != "switch":
        engine.trace.flags.append(f"stage1-{reason}")
        return engine.finish(False, it - 1, t0)
    selection = selections[it - 1]
    return _stage2(engine, fine, cfg, selection, it, idx, eps, t0,
                   pending_from_fine=True)
