"""Electric-vehicle fleet charging blocks.

A block is one vehicle over ``N`` intervals with a binary charging schedule
``u``. Charging at step k adds ``P * delta * xi`` to the battery; the final
charge must reach ``e_ref`` and the running charge may never exceed
``e_max``. Since charge only accumulates, the running cap binds at the last
step, so the domain is exactly the binary schedules whose on-count lies in a
band [count_min, count_max]. The network constraint is
``sum_i P_i u_i^k <= P^max_k``, i.e. ``A_i = P_i * I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..model import BlockOracle, BlockSpec, ProblemInstance

__all__ = [
    "PEVParams",
    "PEVOracle",
    "pev_conjugate",
    "pev_generate",
    "default_price_curve",
    "make_batch_lmo",
    "theta_unit",
]


class InfeasibleBlockError(ValueError):
    pass


@dataclass
class PEVParams:
    P: float            # charging rate
    delta: float        # interval length
    xi: float           # conversion efficiency
    e_init: float
    e_ref: float
    e_max: float
    prices: np.ndarray  # consumption price per step, length N

    def __post_init__(self):
        self.prices = np.asarray(self.prices, float)
        if self.e_init > self.e_max:
            raise ValueError("need e_init <= e_max")

    @property
    def n_steps(self) -> int:
        return self.prices.shape[0]

    @property
    def step_charge(self) -> float:
        return self.P * self.delta * self.xi

    def count_band(self) -> tuple[int, int]:
        s = self.step_charge
        lo = max(0, math.ceil((self.e_ref - self.e_init) / s - 1e-12))
        hi = min(self.n_steps, math.floor((self.e_max - self.e_init) / s + 1e-12))
        return lo, hi

    def to_dict(self) -> dict:
        return {"P": self.P, "delta": self.delta, "xi": self.xi,
                "e_init": self.e_init, "e_ref": self.e_ref, "e_max": self.e_max,
                "prices": self.prices.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PEVParams":
        return cls(P=d["P"], delta=d["delta"], xi=d["xi"], e_init=d["e_init"],
                   e_ref=d["e_ref"], e_max=d["e_max"], prices=d["prices"])


def pev_conjugate(params: PEVParams, y):
    """Greedy conjugate: maximize ``sum_k (y_k - P*price_k) u_k`` over the band.

    Takes every strictly positive net gain, then pads with the least-negative
    gains up to the minimum count or truncates to the maximum; exact for the
    count-band domain.
    """
    lo, hi = params.count_band()
    if lo > params.n_steps or lo > hi:
        raise InfeasibleBlockError("infeasible block: required charge unreachable")
    gains = np.asarray(y, float) - params.P * params.prices
    val, U = kernels.pev_greedy_batch(gains[None, :], np.array([lo]), np.array([hi]))
    return float(val[0]), U[0]


def _sched_cost(P, prices, U):
    # shared by scalar and batched paths (atom cost == value oracle);
    # fixed-order accumulation keeps (1, N) and (n, N) evaluations identical
    U = np.asarray(U, float)
    prices = np.broadcast_to(prices, U.shape)
    out = np.zeros(U.shape[0])
    for k in range(U.shape[1]):
        out = out + prices[:, k] * U[:, k]
    return P * out


class PEVOracle(BlockOracle):
    def __init__(self, params: PEVParams):
        self.p = params
        self.dim = params.n_steps
        self.lo, self.hi = params.count_band()
        if self.lo > params.n_steps or self.lo > self.hi:
            raise InfeasibleBlockError("infeasible block: required charge unreachable")

    def value(self, u):
        u = np.asarray(u, float)
        ur = np.round(u)
        if np.any(np.abs(u - ur) > 1e-9) or np.any((ur != 0.0) & (ur != 1.0)):
            return np.inf
        count = int(ur.sum())
        if not (self.lo <= count <= self.hi):
            return np.inf
        return float(_sched_cost(self.p.P, self.p.prices, u[None, :])[0])

    def conjugate(self, y):
        return pev_conjugate(self.p, y)

    def linmin(self, c):
        c = np.asarray(c, float)
        _, U = kernels.pev_greedy_batch(-c[None, :], np.array([self.lo]), np.array([self.hi]))
        return U[0]

    def gamma_bound(self):
        # extreme cost counts within the band, prices sorted once
        srt = np.sort(self.p.prices)
        csum = np.concatenate([[0.0], np.cumsum(srt)])
        lo_sums = csum[self.lo:self.hi + 1]                 # cheapest-k totals
        csum_hi = np.concatenate([[0.0], np.cumsum(srt[::-1])])
        hi_sums = csum_hi[self.lo:self.hi + 1]              # priciest-k totals
        return float(self.p.P * (np.max(hi_sums) - np.min(lo_sums)))


class _PEVBatch:
    """Vectorized LMO across vehicles: A_i = P_i * I."""

    def __init__(self, blocks: list[BlockSpec]):
        oracles = [b.oracle for b in blocks]
        self.P = np.array([o.p.P for o in oracles])
        self.lo = np.array([o.lo for o in oracles], dtype=np.int64)
        self.hi = np.array([o.hi for o in oracles], dtype=np.int64)
        self.prices = np.stack([o.p.prices for o in oracles])

    def __call__(self, alpha, g):
        if alpha > 0:
            # conjugate direction y = -P*g/alpha, net gains y - P*prices
            gains = -self.P[:, None] * (g[None, :] / alpha + self.prices)
        else:
            gains = -self.P[:, None] * g[None, :]
        _, U = kernels.pev_greedy_batch(gains, self.lo, self.hi)
        cost = _sched_cost(self.P, self.prices, U)
        points = U
        images = self.P[:, None] * U
        return cost, points, images


def make_batch_lmo(blocks: list[BlockSpec]):
    steps = {b.dim for b in blocks}
    if len(steps) != 1:
        return None
    return _PEVBatch(blocks)


def theta_unit(instance: ProblemInstance) -> np.ndarray:
    pmax = max(b.oracle.p.P for b in instance.blocks)
    return np.full(instance.m, pmax)


def default_price_curve(N: int) -> np.ndarray:
    """Fixed diurnal consumption-price curve (stand-in; see generator docs)."""
    k = np.arange(N)
    return 0.12 - 0.04 * np.cos(2 * np.pi * k / N) + 0.02 * np.cos(4 * np.pi * k / N)


def pev_generate(n=500, N=24, seed=0, p_range=(3.0, 5.0), delta=0.25, xi=0.9,
                 e_init_range=(2.0, 8.0), e_ref_range=(8.0, 12.0),
                 e_max_extra=(0.0, 2.0), pmax_factor=0.6,
                 prices=None) -> ProblemInstance:
    """Random fleet instance (all defaults are artifact-defined stand-ins).

    Charging rates U(3,5), initial charge U(2,8), target U(8,12), cap target
    plus U(0,2) corrected so the count band is never empty, fixed diurnal
    price curve, per-step network capacity ``pmax_factor * sum_i P_i``.
    """
    rng = np.random.default_rng(seed)
    if prices is None:
        prices = default_price_curve(N)
    prices = np.asarray(prices, float)
    P = rng.uniform(*p_range, n)
    e_init = rng.uniform(*e_init_range, n)
    e_ref = rng.uniform(*e_ref_range, n)
    e_max = e_ref + rng.uniform(*e_max_extra, n)
    blocks = []
    for i in range(n):
        s = P[i] * delta * xi
        # keep the target reachable within the horizon
        e_ref[i] = min(e_ref[i], e_init[i] + N * s)
        e_max[i] = max(e_max[i], e_ref[i])
        lo = max(0, math.ceil((e_ref[i] - e_init[i]) / s - 1e-12))
        hi = math.floor((e_max[i] - e_init[i]) / s + 1e-12)
        if hi < lo:  # tiny e_max draw; lift the cap to keep the block feasible
            e_max[i] = e_init[i] + lo * s + 0.5 * s
        params = PEVParams(P=float(P[i]), delta=delta, xi=xi, e_init=float(e_init[i]),
                           e_ref=float(e_ref[i]), e_max=float(e_max[i]), prices=prices)
        A = np.eye(N) * P[i]
        blocks.append(BlockSpec(A=A, oracle=PEVOracle(params), dim=N,
                                app="pev", params=params.to_dict()))
    b = np.full(N, pmax_factor * float(np.sum(P)))
    inst = ProblemInstance(n=n, m=N, blocks=blocks, b=b)
    inst.batch_lmo = make_batch_lmo(blocks)
    return inst
