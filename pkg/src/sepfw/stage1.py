"""Stage 1: Frank-Wolfe toward the target (dual value, right-hand side).

Minimizes half the squared positive-part distance between an aggregate of
per-block extreme points and the target vector ``(v*, b)``. Every linear
minimization decomposes into one conjugate (or pure linear) oracle call per
block, and the iterate is maintained as an explicit convex combination of
the visited atom sets so the second stage can trim it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .model import Atom, BlockOracle, OracleError, ProblemInstance, plus_norm

__all__ = ["Target", "FWTrace", "fw_gradient", "lmo", "run_stage1",
           "sample_diameter", "block_lmo_all"]

WEIGHT_PRUNE_TOL = 1e-14


@dataclass
class Target:
    """FW target vector; first coordinate is the dual value in use."""

    z_star: np.ndarray

    def __post_init__(self):
        self.z_star = np.asarray(self.z_star, float).reshape(-1)


def fw_gradient(z, z_star):
    """Positive parts of ``z - z_star``: (cost component, constraint rows)."""
    z = np.asarray(z, float)
    z_star = np.asarray(z_star, float)
    alpha = max(float(z[0] - z_star[0]), 0.0)
    g = np.maximum(z[1:] - z_star[1:], 0.0)
    return alpha, g


def exact_linesearch(a: np.ndarray, b: np.ndarray) -> float:
    """Minimize ``eta -> 0.5 * || (a + eta b)_+ ||^2`` over [0, 1].

    Piecewise quadratic in ``eta`` with breakpoints where coordinates cross
    zero; scans the pieces and returns the global minimizer (ties toward the
    smaller step). This adapts to the very different magnitudes of the cost
    and constraint coordinates, where a single smoothness-based step length
    collapses.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    crossing = b != 0.0
    brk = -a[crossing] / b[crossing]
    knots = np.unique(np.concatenate([[0.0, 1.0], brk[(brk > 0.0) & (brk < 1.0)]]))

    def phi(eta):
        r = np.maximum(a + eta * b, 0.0)
        return 0.5 * float(r @ r)

    best_eta, best_val = 0.0, phi(0.0)
    for lo, hi in zip(knots[:-1], knots[1:]):
        mid = 0.5 * (lo + hi)
        act = (a + mid * b) > 0.0
        q = float(b[act] @ b[act])
        if q > 0.0:
            eta = float(np.clip(-(a[act] @ b[act]) / q, lo, hi))
        else:
            eta = lo
        for cand in (eta, hi):
            val = phi(cand)
            if val < best_val - 1e-18 * (1.0 + best_val):
                best_eta, best_val = cand, val
    return best_eta


def block_lmo_all(instance: ProblemInstance, alpha: float, g: np.ndarray):
    """Per-block minimizers of ``alpha f** + g . (A x)`` over the hulls.

    Returns ``(costs, points, images)``; uses the instance's batched fast
    path when present, else one oracle call per block. ``alpha > 0`` routes
    through the conjugate at ``-A^T g / alpha``, ``alpha == 0`` through pure
    linear minimization.
    """
    if instance.batch_lmo is not None:
        return instance.batch_lmo(alpha, g)
    costs = np.empty(instance.n)
    images = np.empty((instance.n, instance.m))
    points = []
    for i, blk in enumerate(instance.blocks):
        try:
            direction = blk.A.T @ g
            if alpha > 0:
                _, x = blk.oracle.conjugate(-direction / alpha)
            else:
                x = blk.oracle.linmin(direction)
            x = np.asarray(x, float)
            costs[i] = blk.oracle.value(x)
            images[i] = blk.A @ x
            points.append(x)
        except Exception as exc:
            if isinstance(exc, OracleError):
                raise
            raise OracleError(i, str(exc)) from exc
    return costs, points, images


def lmo(instance: ProblemInstance, alpha: float, g: np.ndarray, it: int = 0):
    """One linear minimization: per-block atoms and their aggregate.

    Returns ``(atoms, s)`` with one :class:`Atom` per block and
    ``s = (sum costs, sum images)`` in R^{1+m}.
    """
    if alpha < 0 or np.any(np.asarray(g) < 0):
        raise ValueError("need alpha >= 0 and g >= 0")
    costs, points, images = block_lmo_all(instance, float(alpha), np.asarray(g, float))
    atoms = [Atom(block=i, iter=it, point=np.asarray(points[i], float),
                  cost=float(costs[i]), image=np.asarray(images[i], float))
             for i in range(instance.n)]
    s = np.concatenate([[costs.sum()], images.sum(axis=0)])
    return atoms, s


class AtomPool:
    """Deduplicated atoms of one block, stored columnar.

    Points are kept as their byte payloads (shared with the dedup index) and
    costs/images in growable arrays: a long run can visit hundreds of
    thousands of distinct atoms per block set.
    """

    def __init__(self, dim: int, m: int):
        self.dim = dim
        self.m = m
        self._index: dict[bytes, int] = {}
        self._point_bytes: list[bytes] = []
        self._costs = np.empty(64)
        self._images = np.empty((64, m))
        self.first_iter: list[int] = []
        self._count = 0

    def add(self, point: np.ndarray, cost: float, image: np.ndarray, it: int) -> int:
        key = point.tobytes()
        idx = self._index.get(key)
        if idx is None:
            idx = self._count
            if idx == self._costs.shape[0]:
                self._costs = np.concatenate([self._costs, np.empty(idx)])
                self._images = np.vstack([self._images, np.empty((idx, self.m))])
            self._index[key] = idx
            self._point_bytes.append(key)
            self._costs[idx] = cost
            self._images[idx] = image
            self.first_iter.append(it)
            self._count += 1
        return idx

    def __len__(self) -> int:
        return self._count

    def point(self, idx: int) -> np.ndarray:
        return np.frombuffer(self._point_bytes[idx], dtype=float).copy()

    def cost_array(self) -> np.ndarray:
        return self._costs[:self._count]

    def image_matrix(self) -> np.ndarray:
        return self._images[:self._count]


@dataclass
class FWTrace:
    """Iterate, convex weights, and the atom pool behind them.

    ``weights[e]`` is the surviving convex weight of entry ``e``;
    ``selections[e, i]`` indexes that entry's atom for block ``i`` inside
    ``pools[i]``. Entry 0 is the initial atom set unless an exact unit step
    displaced it.
    """

    z_star: np.ndarray
    z_final: np.ndarray
    weights: np.ndarray
    selections: np.ndarray           # (entries, n) int32
    pools: list[AtomPool]
    residual_history: np.ndarray
    n: int
    m: int
    iterations: int
    step_rule: str
    stop_reason: str = ""
    times: Optional[np.ndarray] = None   # elapsed seconds per recorded residual

    @property
    def residual(self) -> float:
        return float(self.residual_history[-1])

    def atom(self, entry: int, block: int) -> Atom:
        pool = self.pools[block]
        idx = int(self.selections[entry, block])
        return Atom(block=block, iter=pool.first_iter[idx], point=pool.point(idx),
                    cost=float(pool.cost_array()[idx]), image=pool.image_matrix()[idx].copy())

    def aggregate(self) -> np.ndarray:
        """Recompute sum_e gamma_e s_e from the pools (bookkeeping identity)."""
        out = np.zeros(1 + self.m)
        for i in range(self.n):
            w = self.merged_weights(i)
            out[0] += w @ self.pools[i].cost_array()
            out[1:] += w @ self.pools[i].image_matrix()
        return out

    def merged_weights(self, block: int) -> np.ndarray:
        """Total convex weight per distinct atom of one block."""
        return np.bincount(self.selections[:, block], weights=self.weights,
                           minlength=len(self.pools[block]))

    def n_distinct_atoms(self) -> int:
        return sum(len(p) for p in self.pools)


def run_stage1(instance: ProblemInstance, v_star: float, K: int,
               step_rule: str = "exact", stop_tol: float = 0.0,
               b: Optional[np.ndarray] = None,
               callback: Optional[Callable] = None,
               check_every: int = 0) -> FWTrace:
    """Run K conditional-gradient iterations toward ``(v_star, b)``.

    The initial point aggregates one conjugate-argmax per block at direction
    zero (an extreme point where the block cost meets its convex envelope).
    Step rules: "exact" minimizes the piecewise-quadratic objective along the
    segment, "harmonic" uses 2/(k+2), "majorization" the smoothness-based
    formula (monotone but scale-sensitive).
    Convex weights are maintained multiplicatively and entries below 1e-14
    are pruned (with renormalization) at the end. The positive-part residual
    doubles as the stopping criterion: the run exits early when it falls to
    ``stop_tol`` (always on exact zero).

    ``callback(trace)`` fires every ``check_every`` iterations when set; a
    truthy return stops the run ("checkpoint" in the trace's stop reason).
    """
    if step_rule not in ("exact", "harmonic", "majorization"):
        raise ValueError(f"unknown step rule {step_rule!r}")
    if K < 0:
        raise ValueError("K must be >= 0")
    b_eff = instance.b if b is None else np.asarray(b, float)
    z_star = np.concatenate([[float(v_star)], b_eff])
    n, m = instance.n, instance.m

    pools = [AtomPool(blk.dim, m) for blk in instance.blocks]
    costs, points, images = block_lmo_all(instance, 1.0, np.zeros(m))
    ids0 = np.array([pools[i].add(np.asarray(points[i], float), costs[i], images[i], 0)
                     for i in range(n)], dtype=np.int32)
    z = np.concatenate([[costs.sum()], images.sum(axis=0)])

    raw = [1.0]
    scale = 1.0
    selections = [ids0]
    residuals = [plus_norm(z - z_star)]
    t_start = time.perf_counter()
    times = [0.0]
    stop_reason = "K"

    def snapshot(k):
        w = np.asarray(raw) * scale
        total = w.sum()
        return FWTrace(z_star=z_star.copy(), z_final=z.copy(), weights=w / total,
                       selections=np.vstack(selections), pools=pools,
                       residual_history=np.asarray(residuals), n=n, m=m,
                       iterations=k, step_rule=step_rule, stop_reason="checkpoint")

    k = 0
    for k in range(K):
        if residuals[-1] <= stop_tol or residuals[-1] == 0.0:
            stop_reason = "residual"
            break
        alpha, g = fw_gradient(z, z_star)
        costs, points, images = block_lmo_all(instance, alpha, g)
        s = np.concatenate([[costs.sum()], images.sum(axis=0)])
        d = z - s
        den = float(d @ d)
        if step_rule == "harmonic":
            eta = 2.0 / (k + 2.0)
        elif den < 1e-16:
            stop_reason = "stationary"
            break
        elif step_rule == "exact":
            eta = exact_linesearch(z - z_star, -d)
            if eta <= 0.0:
                stop_reason = "stationary"
                break
        else:  # majorization: the smoothness-based step
            grad = np.concatenate([[alpha], g])
            eta = min(1.0, float(grad @ d) / den)
            if eta <= 0.0:
                stop_reason = "stationary"
                break
        ids = np.array([pools[i].add(np.asarray(points[i], float), costs[i], images[i], k + 1)
                        for i in range(n)], dtype=np.int32)
        if eta >= 1.0:
            raw = [1.0]
            scale = 1.0
            selections = [ids]
            z = s
        else:
            scale *= (1.0 - eta)
            if scale < 1e-250:          # rescale before underflow
                raw = [r * scale for r in raw]
                scale = 1.0
            raw.append(eta / scale)
            selections.append(ids)
            z = (1.0 - eta) * z + eta * s
        residuals.append(plus_norm(z - z_star))
        times.append(time.perf_counter() - t_start)
        if callback is not None and check_every and (k + 1) % check_every == 0:
            if callback(snapshot(k + 1)):
                stop_reason = "checkpoint"
                k += 1
                break
    else:
        k = K

    weights = np.asarray(raw) * scale
    sel = np.vstack(selections)
    keep = weights >= WEIGHT_PRUNE_TOL
    if not np.all(keep):
        weights = weights[keep]
        sel = sel[keep]
    weights = weights / weights.sum()
    return FWTrace(z_star=z_star, z_final=z, weights=weights, selections=sel,
                   pools=pools, residual_history=np.asarray(residuals), n=n, m=m,
                   iterations=k, step_rule=step_rule, stop_reason=stop_reason,
                   times=np.asarray(times))


def sample_diameter(instance: ProblemInstance, pairs: int = 10000, seed: int = 0) -> float:
    """Lower estimate of the aggregate-set diameter from sampled LMO outputs.

    Draws nonnegative random directions (a fifth of them pure linear, the
    rest conjugate-routed), collects the aggregated extreme points, and
    returns the largest pairwise distance over at least ``pairs`` pairs.
    Reported only; no algorithm consumes it.
    """
    rng = np.random.default_rng(seed)
    R = 2
    while R * (R - 1) // 2 < pairs:
        R += 1
    pts = np.empty((R, 1 + instance.m))
    for r in range(R):
        alpha = 0.0 if rng.uniform() < 0.2 else abs(rng.normal())
        g = np.abs(rng.normal(size=instance.m))
        costs, _, images = block_lmo_all(instance, alpha, g)
        pts[r, 0] = costs.sum()
        pts[r, 1:] = images.sum(axis=0)
    best = 0.0
    for r in range(R - 1):
        dif = pts[r + 1:] - pts[r]
        best = max(best, float(np.max(np.einsum("ij,ij->i", dif, dif))))
    return float(np.sqrt(best))
