"""Final stage: turn a trimmed per-block cover into a primal candidate.

Four schemes: the per-block weighted average (exact constraint-image
identity; feasible only for convex domains), random sampling by the weights
(feasible per block, constraints hold in expectation), repair of averaged
blocks through the domain's repair oracle (never increases the coupling
image), and taking each block's heaviest atom. The perturbation loop wraps
the whole pipeline, widening the right-hand side until the reconstruction is
feasible for the original constraints.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import apps as apps_registry
from .config import SolverConfig
from .dual import DualResult, solve_dual
from .model import EvalResult, ProblemInstance, evaluate, plus_norm
from .stage1 import FWTrace, run_stage1
from .trim import TrimResult, UncoveredBlockError, trim_approx, trim_exact

__all__ = [
    "Reconstruction",
    "reconstruct_average",
    "reconstruct_sample",
    "reconstruct_repair",
    "reconstruct_max",
    "run_pipeline",
    "solve_with_perturbation",
    "PipelineRun",
    "RepairUnavailableError",
    "ZetaExhaustedError",
    "SCHEMES",
]


class RepairUnavailableError(RuntimeError):
    def __init__(self, blocks):
        super().__init__(f"repair unavailable for block(s): {list(blocks)}")
        self.blocks = list(blocks)


class ZetaExhaustedError(RuntimeError):
    def __init__(self, attempts):
        super().__init__("zeta exhausted: no feasible reconstruction within zeta_max")
        self.attempts = attempts


@dataclass
class Reconstruction:
    """A primal candidate with its recomputed objective and violation."""

    x_bar: list[np.ndarray]
    scheme: str
    objective: float
    violation: np.ndarray
    per_block_feasible: list[bool]
    w_trim: np.ndarray

    @property
    def violation_plus(self) -> float:
        return plus_norm(self.violation)

    @property
    def feasible(self) -> bool:
        return bool(all(self.per_block_feasible) and np.all(self.violation <= 0))


def _finish(instance: ProblemInstance, x_bar, scheme: str, trim: TrimResult) -> Reconstruction:
    ev = evaluate(instance, x_bar)
    return Reconstruction(x_bar=x_bar, scheme=scheme, objective=ev.objective,
                          violation=ev.violation, per_block_feasible=ev.feasible_blocks,
                          w_trim=trim.w_trim.copy())


def reconstruct_average(trim: TrimResult, instance: ProblemInstance) -> Reconstruction:
    """Blockwise weighted average of the trimmed atoms.

    Its aggregate coupling image reproduces the trimmed vector exactly, so
    the candidate inherits the stage-1 feasibility residual; block points of
    nontrivial groups live in the hull only, which suits convex domains.
    """
    x_bar = [sum(w * atom.point for w, atom in group) for group in trim.groups]
    return _finish(instance, x_bar, "average", trim)


def reconstruct_sample(trim: TrimResult, instance: ProblemInstance,
                       seed: int = 0) -> Reconstruction:
    """Draw each block's atom with probability equal to its trim weight."""
    rng = np.random.default_rng(seed)
    x_bar = []
    for group in trim.groups:          # block order, one shared generator
        if len(group) == 1:
            x_bar.append(group[0][1].point.copy())
            continue
        w = np.array([wl for wl, _ in group])
        pick = rng.choice(len(group), p=w / w.sum())
        x_bar.append(group[pick][1].point.copy())
    return _finish(instance, x_bar, "sample", trim)


def reconstruct_repair(trim: TrimResult, instance: ProblemInstance) -> Reconstruction:
    """Average nontrivial blocks, then pull them back into the domain.

    Repair never increases a block's coupling image, so the candidate is at
    least as feasible as the trimmed aggregate.
    """
    missing = [i for i, group in enumerate(trim.groups)
               if len(group) > 1 and instance.blocks[i].oracle.repair is None]
    if missing:
        raise RepairUnavailableError(missing)
    x_bar = []
    for i, group in enumerate(trim.groups):
        if len(group) == 1:
            x_bar.append(group[0][1].point.copy())
        else:
            avg = sum(w * atom.point for w, atom in group)
            x_bar.append(np.asarray(instance.blocks[i].oracle.repair(avg), float))
    return _finish(instance, x_bar, "repair", trim)


def reconstruct_max(trim: TrimResult, instance: ProblemInstance) -> Reconstruction:
    """Keep each block's heaviest atom (lowest index on ties)."""
    x_bar = []
    for group in trim.groups:
        weights = np.array([w for w, _ in group])
        x_bar.append(group[int(np.argmax(weights))][1].point.copy())
    return _finish(instance, x_bar, "max", trim)


SCHEMES: dict[str, Callable] = {
    "average": lambda trim, inst, seed: reconstruct_average(trim, inst),
    "sample": lambda trim, inst, seed: reconstruct_sample(trim, inst, seed),
    "repair": lambda trim, inst, seed: reconstruct_repair(trim, inst),
    "max": lambda trim, inst, seed: reconstruct_max(trim, inst),
}


@dataclass
class PipelineRun:
    """One full pass: dual bound, stage-1 trace, trim, reconstruction."""

    zeta: int
    theta: np.ndarray
    dual: DualResult
    trace: FWTrace
    trim: TrimResult
    recon: Reconstruction
    eval_original: EvalResult
    timings: dict
    trim_T: Optional[int] = None

    @property
    def violation_plus_original(self) -> float:
        return plus_norm(self.eval_original.violation)

    @property
    def violation_plus_perturbed(self) -> float:
        return plus_norm(self.eval_original.violation + self.theta)

    @property
    def feasible_original(self) -> bool:
        return bool(all(self.eval_original.feasible_blocks)
                    and np.all(self.eval_original.violation <= 0))


def _stage_seed(seed: int, zeta: int, stage: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(zeta, stage)).generate_state(1)[0])


def run_pipeline(instance: ProblemInstance, config: SolverConfig,
                 theta: Optional[np.ndarray] = None, scheme: Optional[str] = None,
                 zeta: int = 0) -> PipelineRun:
    """dual -> stage-1 -> trim -> reconstruction, for one right-hand side.

    ``theta`` widens the constraints (``b - theta``); the dual is re-solved
    for the perturbed problem unless ``config.v_star`` is supplied for the
    unperturbed one. The approximate trim retries with doubled T on
    uncovered blocks, capped at the pool size minus one.
    """
    theta = np.zeros(instance.m) if theta is None else np.asarray(theta, float)
    if np.any(theta < 0):
        raise ValueError("theta must be nonnegative")
    scheme = scheme or config.scheme
    if scheme == "auto":
        scheme = apps_registry.default_scheme(instance)
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    perturbed = instance.with_b(instance.b - theta) if np.any(theta != 0) else instance
    timings = {}

    t0 = time.perf_counter()
    v_supplied = config.v_star if not np.any(theta != 0) else None
    dual = solve_dual(perturbed, max_iter=config.dual_max_iter, step0=config.dual_step0,
                      stop_tol=config.dual_stop_tol, patience=config.dual_patience,
                      method=config.dual_method, v_star=v_supplied)
    timings["dual"] = time.perf_counter() - t0

    callback = None
    if config.check_every > 0:
        feas_tol = config.tol_feas * (1.0 + float(np.linalg.norm(instance.b)))

        def callback(snapshot):
            # cheap interim trim + reconstruction; stop on full feasibility
            T_chk = max(instance.n + instance.m, instance.n - 1, 1)
            try:
                interim = trim_approx(snapshot, perturbed, "mnp", T_chk,
                                      seed=_stage_seed(config.seed, zeta, 4))
                rec = SCHEMES[scheme](interim, instance,
                                      _stage_seed(config.seed, zeta, 5))
            except (UncoveredBlockError, RepairUnavailableError):
                return False
            ev = evaluate(instance, rec.x_bar)
            return all(ev.feasible_blocks) and plus_norm(ev.violation) <= feas_tol

    t0 = time.perf_counter()
    trace = run_stage1(perturbed, dual.v_star, config.fw_K,
                       step_rule=config.fw_step_rule, stop_tol=config.fw_stop_tol,
                       callback=callback, check_every=config.check_every)
    timings["fw"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    trim_T = None
    if config.carath_method == "exact":
        trim = trim_exact(trace, perturbed, seed=_stage_seed(config.seed, zeta, 2),
                          refactor_every=config.refactor_every)
    else:
        T = config.trim_T if config.trim_T is not None else instance.n + instance.m
        T = max(T, instance.n - 1, 1)
        n_pool = sum(len(p) for p in trace.pools)
        while True:
            try:
                trim = trim_approx(trace, perturbed, config.carath_method, T,
                                   seed=_stage_seed(config.seed, zeta, 2))
                break
            except UncoveredBlockError:
                if T >= n_pool - 1:
                    raise
                T = min(2 * T, n_pool - 1)
        trim_T = T
    timings["trim"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    recon = SCHEMES[scheme](trim, instance, _stage_seed(config.seed, zeta, 3))
    timings["reconstruct"] = time.perf_counter() - t0

    ev = evaluate(instance, recon.x_bar)
    return PipelineRun(zeta=zeta, theta=theta, dual=dual, trace=trace, trim=trim,
                       recon=recon, eval_original=ev, timings=timings, trim_T=trim_T)


def solve_with_perturbation(instance: ProblemInstance, scheme: Optional[str] = None,
                            zeta_rule: Optional[Callable[[int], np.ndarray]] = None,
                            config: Optional[SolverConfig] = None):
    """Escalate the right-hand side widening until the candidate is feasible.

    Runs the pipeline at zeta = 0, 1, ... with ``theta = zeta_rule(zeta)``
    and stops at the first reconstruction fully feasible for the original
    constraints (within ``tol_feas``). Returns ``(final_run, zeta_used,
    attempts)``; raises :class:`ZetaExhaustedError` past ``zeta_max``.
    """
    config = config or SolverConfig()
    if zeta_rule is None:
        zeta_rule = apps_registry.make_zeta_rule(instance)
    tol = config.tol_feas * (1.0 + float(np.linalg.norm(instance.b)))
    attempts = []
    for zeta in range(config.zeta_max + 1):
        run = run_pipeline(instance, config, theta=zeta_rule(zeta), scheme=scheme,
                           zeta=zeta)
        attempts.append(run)
        ok_blocks = all(run.eval_original.feasible_blocks)
        if ok_blocks and run.violation_plus_original <= tol:
            return run, zeta, attempts
    raise ZetaExhaustedError(attempts)
