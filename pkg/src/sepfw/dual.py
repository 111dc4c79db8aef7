"""Dual bound: projected subgradient ascent on the Lagrangian dual.

The dual function splits over blocks, so one evaluation is one conjugate
call per block at direction ``-A_i^T lambda``; its value lower-bounds every
feasible objective, and the running best is reported (the subgradient
iteration is not monotone).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import OracleError, ProblemInstance
from .stage1 import block_lmo_all

__all__ = ["DualResult", "eval_psi", "solve_dual"]


@dataclass
class DualResult:
    v_star: float
    lam: Optional[np.ndarray]          # best multiplier seen; None when bypassed
    iterations: int
    psi_history: np.ndarray            # raw per-iteration values
    stop_reason: str = ""

    @property
    def best_history(self) -> np.ndarray:
        if self.psi_history.size == 0:
            return self.psi_history
        return np.maximum.accumulate(self.psi_history)


def eval_psi(instance: ProblemInstance, lam):
    """Dual function value, a supergradient, and the block minimizers.

    Per block the minimizer of ``f_i(x) + lam . A_i x`` is the conjugate
    argmax at ``-A_i^T lam``; the supergradient is the aggregate constraint
    residual at those minimizers.
    """
    lam = np.asarray(lam, float)
    if np.any(lam < 0):
        raise ValueError("lambda must be nonnegative")
    costs, points, images = block_lmo_all(instance, 1.0, lam)
    total_img = images.sum(axis=0)
    subgrad = total_img - instance.b
    psi = float(costs.sum() + lam @ subgrad)
    minimizers = [np.asarray(points[i], float) for i in range(instance.n)]
    return psi, subgrad, minimizers


def solve_dual(instance: ProblemInstance, max_iter: int = 5000, step0: Optional[float] = None,
               stop_tol: float = 1e-6, patience: int = 200, method: str = "subgradient",
               v_star: Optional[float] = None) -> DualResult:
    """Maximize the dual over lambda >= 0; returns the running best.

    ``step0`` defaults to ``1/(1 + ||b||)`` with the decreasing schedule
    ``step0 / sqrt(t+1)``. Stops when the best value improves by less than
    ``stop_tol`` (relative) over a ``patience`` window. ``v_star`` bypasses
    the solve entirely; ``method="lbfgsb"`` hands the smooth case to scipy.
    """
    if v_star is not None:
        return DualResult(v_star=float(v_star), lam=None, iterations=0,
                          psi_history=np.array([]), stop_reason="supplied")
    if method == "lbfgsb":
        return _solve_lbfgsb(instance, max_iter)
    if method != "subgradient":
        raise ValueError(f"unknown dual method {method!r}")

    m = instance.m
    base = 1.0 / (1.0 + float(np.linalg.norm(instance.b)))
    history = np.empty(max_iter + 1)
    used = 0

    def record(psi):
        nonlocal used
        history[used] = psi
        used += 1

    psi0, g0, _ = eval_psi(instance, np.zeros(m))
    record(psi0)
    best, best_lam = psi0, np.zeros(m)
    if np.max(g0) <= 0.0:
        # unconstrained block minimizers already feasible: lambda* = 0
        return DualResult(v_star=float(best), lam=best_lam, iterations=used,
                          psi_history=history[:used], stop_reason="interior")

    if step0 is None:
        # A fixed step of base/sqrt(t) can be orders of magnitude off the
        # multiplier scale. Probe a geometric ladder along the first ascent
        # direction to find that scale; it supplies a warm start and a
        # calibrated step, with the old default as a floor.
        d0 = np.maximum(g0, 0.0)
        d0 /= np.linalg.norm(d0)
        g_ref = float(np.linalg.norm(g0))
        drops = 0
        for j in range(-3, 16):
            if used >= max_iter:
                break
            s = base * 4.0 ** j
            psi, sub, _ = eval_psi(instance, s * d0)
            record(psi)
            if psi > best:
                best, best_lam = psi, s * d0
                drops = 0
                g_ref = float(np.linalg.norm(sub))
            else:
                drops += 1
                if drops >= 2:
                    break
        remaining = max(max_iter - used, 1)
        scale = float(np.linalg.norm(best_lam))
        step0 = max(base, scale / (np.sqrt(remaining) * max(g_ref, 1e-30)))

    lam = best_lam.copy()
    window_best = -np.inf
    window_start = used
    stop_reason = "max_iter"
    t = 0
    while used < max_iter:
        psi, sub, _ = eval_psi(instance, lam)
        record(psi)
        if psi > best:
            best = psi
            best_lam = lam.copy()
        if used - window_start >= patience:
            if best - window_best <= stop_tol * (1.0 + abs(best)):
                stop_reason = "patience"
                break
            window_best = best
            window_start = used
        lam = np.maximum(0.0, lam + (step0 / np.sqrt(t + 1.0)) * sub)
        t += 1
    return DualResult(v_star=float(best), lam=best_lam, iterations=used,
                      psi_history=history[:used], stop_reason=stop_reason)


def _solve_lbfgsb(instance: ProblemInstance, max_iter: int) -> DualResult:
    from scipy.optimize import minimize

    history = []

    def neg_psi(lam):
        psi, sub, _ = eval_psi(instance, lam)
        history.append(psi)
        return -psi, -sub

    res = minimize(neg_psi, np.zeros(instance.m), jac=True, method="L-BFGS-B",
                   bounds=[(0.0, None)] * instance.m,
                   options={"maxiter": max_iter, "ftol": 1e-14, "gtol": 1e-12})
    hist = np.asarray(history)
    best_idx = int(np.argmax(hist)) if hist.size else 0
    v_best = float(hist[best_idx]) if hist.size else float(-res.fun)
    return DualResult(v_star=v_best, lam=np.maximum(res.x, 0.0),
                      iterations=int(res.nit), psi_history=hist,
                      stop_reason="lbfgsb:" + str(res.message))
