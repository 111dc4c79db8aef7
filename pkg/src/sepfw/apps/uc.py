"""Unit commitment blocks: on/off units with quadratic production cost.

A block is one unit over ``N`` time steps with point layout
``x = (u_1..u_N, g_1..g_N)``: binary on/off decisions and production levels.
Per step the pair is either ``(0, 0)`` or ``(1, g)`` with
``g in [g_min, g_max]``. Switching on costs ``c01``, switching off ``c10``;
production costs ``beta g^2 + gamma g + omega`` while on. All units start
off. The demand constraint ``sum_i g_i^t >= D_t`` is encoded in the <= form
as ``-sum_i g_i^t <= -D_t``, so ``A_i = [0 | -I]`` and ``b = -D``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..model import BlockOracle, BlockSpec, ProblemInstance

__all__ = [
    "UCParams",
    "UnitCommitmentOracle",
    "uc_conjugate",
    "uc_linmin",
    "uc_gamma",
    "uc_generate",
    "make_batch_lmo",
    "theta_unit",
]


@dataclass
class UCParams:
    c01: float
    c10: float
    beta: float
    gamma_c: float
    omega: float
    g_min: float
    g_max: float
    n_steps: int

    def __post_init__(self):
        if not (0 < self.g_min < self.g_max):
            raise ValueError("need 0 < g_min < g_max")
        if self.beta <= 0:
            raise ValueError("need beta > 0")

    def to_dict(self) -> dict:
        return {"c01": self.c01, "c10": self.c10, "beta": self.beta,
                "gamma": self.gamma_c, "omega": self.omega,
                "g_min": self.g_min, "g_max": self.g_max, "N": self.n_steps}

    @classmethod
    def from_dict(cls, d: dict) -> "UCParams":
        return cls(c01=d["c01"], c10=d["c10"], beta=d["beta"], gamma_c=d["gamma"],
                   omega=d["omega"], g_min=d["g_min"], g_max=d["g_max"], n_steps=d["N"])

    def _arrays(self):
        return (np.array([self.c01]), np.array([self.c10]), np.array([self.beta]),
                np.array([self.gamma_c]), np.array([self.omega]),
                np.array([self.g_min]), np.array([self.g_max]))


def uc_conjugate(params: UCParams, v, p):
    """Conjugate value and maximizing schedule for direction ``(v, p)``.

    O(N) dynamic program over (step, on/off); the argmax is recovered by
    backtracking stored decisions, ties broken toward staying in the current
    state and toward off at the final step.
    """
    v = np.asarray(v, float).reshape(1, -1)
    p = np.asarray(p, float).reshape(1, -1)
    fstar, U, G, cost = kernels.uc_conjugate_batch(*params._arrays(), v, p)
    return float(fstar[0]), (U[0], G[0])


def uc_linmin(params: UCParams, c_u, c_g):
    """Cheapest extreme point per step under linear cost ``(c_u, c_g)``.

    Per-step extreme points of the hull are (0,0), (1,g_min), (1,g_max);
    ties resolve in that order.
    """
    c_u = np.asarray(c_u, float)
    c_g = np.asarray(c_g, float)
    cand = np.stack([np.zeros_like(c_u),
                     c_u + c_g * params.g_min,
                     c_u + c_g * params.g_max])
    idx = np.argmin(cand, axis=0)
    u = (idx > 0).astype(float)
    g = np.where(idx == 1, params.g_min, np.where(idx == 2, params.g_max, 0.0))
    return u, g


def uc_gamma(params: UCParams) -> float:
    """Exact cost range sup f - inf f over the domain, via two DP passes."""
    N = params.n_steps
    beta, gam, om = params.beta, params.gamma_c, params.omega
    vert = np.clip(-gam / (2.0 * beta), params.g_min, params.g_max)
    qmin = beta * vert**2 + gam * vert + om
    qmax = max(beta * params.g_min**2 + gam * params.g_min + om,
               beta * params.g_max**2 + gam * params.g_max + om)
    hi0, hi1 = 0.0, params.c01 + qmax
    lo0, lo1 = 0.0, params.c01 + qmin
    for _ in range(1, N):
        hi0, hi1 = max(hi0, hi1 + params.c10), max(hi0 + params.c01, hi1) + qmax
        lo0, lo1 = min(lo0, lo1 + params.c10), min(lo0 + params.c01, lo1) + qmin
    return max(hi0, hi1) - min(lo0, lo1)


class UnitCommitmentOracle(BlockOracle):
    def __init__(self, params: UCParams):
        self.p = params
        self.n_steps = params.n_steps
        self.dim = 2 * params.n_steps
        self._eps_g = 1e-9 * (1.0 + params.g_max)

    def _split(self, x):
        return x[:self.n_steps], x[self.n_steps:]

    def value(self, x):
        u, g = self._split(np.asarray(x, float))
        ur = np.round(u)
        if np.any(np.abs(u - ur) > 1e-9) or np.any((ur != 0.0) & (ur != 1.0)):
            return np.inf
        on = ur == 1.0
        if np.any(np.abs(g[~on]) > self._eps_g):
            return np.inf
        if np.any(g[on] < self.p.g_min - self._eps_g) or np.any(g[on] > self.p.g_max + self._eps_g):
            return np.inf
        cost = kernels.uc_value_batch(*self.p._arrays()[:5], u[None, :], g[None, :])
        return float(cost[0])

    def conjugate(self, y):
        v, p = self._split(np.asarray(y, float))
        val, (u, g) = uc_conjugate(self.p, v, p)
        return val, np.concatenate([u, g])

    def linmin(self, c):
        c_u, c_g = self._split(np.asarray(c, float))
        u, g = uc_linmin(self.p, c_u, c_g)
        return np.concatenate([u, g])

    def repair(self, x):
        """Round hull points into the domain without lowering any output.

        A fractional step means producing below the minimum allowed while
        partially on; setting it to on with production clamped into
        [g_min, g_max] only increases output, so the coupling image
        (-g per row) never increases.
        """
        u, g = self._split(np.asarray(x, float))
        on = u > 1e-12
        g_hat = np.where(on, np.clip(g, self.p.g_min, self.p.g_max), 0.0)
        return np.concatenate([on.astype(float), g_hat])

    def gamma_bound(self):
        return uc_gamma(self.p)


class _UCBatch:
    """Vectorized LMO across units: A_i = [0 | -I], so directions share g."""

    def __init__(self, blocks: list[BlockSpec]):
        ps = [b.oracle.p for b in blocks]
        self.N = ps[0].n_steps
        self.c01 = np.array([p.c01 for p in ps])
        self.c10 = np.array([p.c10 for p in ps])
        self.beta = np.array([p.beta for p in ps])
        self.gam = np.array([p.gamma_c for p in ps])
        self.om = np.array([p.omega for p in ps])
        self.gmin = np.array([p.g_min for p in ps])
        self.gmax = np.array([p.g_max for p in ps])
        self.n = len(ps)

    def __call__(self, alpha, g):
        n, N = self.n, self.N
        if alpha > 0:
            V = np.zeros((n, N))
            P = np.broadcast_to(g / alpha, (n, N)).copy()
            _, U, G, cost = kernels.uc_conjugate_batch(
                self.c01, self.c10, self.beta, self.gam, self.om,
                self.gmin, self.gmax, V, P)
        else:
            cg = -g
            cand = np.stack([np.zeros((n, N)),
                             np.broadcast_to(cg, (n, N)) * self.gmin[:, None],
                             np.broadcast_to(cg, (n, N)) * self.gmax[:, None]])
            idx = np.argmin(cand, axis=0)
            U = (idx > 0).astype(float)
            G = np.where(idx == 1, self.gmin[:, None],
                         np.where(idx == 2, self.gmax[:, None], 0.0))
            cost = kernels.uc_value_batch(self.c01, self.c10, self.beta,
                                          self.gam, self.om, U, G)
        points = np.hstack([U, G])
        images = -G
        return cost, points, images


def make_batch_lmo(blocks: list[BlockSpec]):
    steps = {b.oracle.n_steps for b in blocks}
    if len(steps) != 1:
        return None
    return _UCBatch(blocks)


def theta_unit(instance: ProblemInstance) -> np.ndarray:
    """max_i g_max_i on every row: one unit's worth of slack."""
    gmax = max(b.oracle.p.g_max for b in instance.blocks)
    return np.full(instance.m, gmax)


def uc_generate(n, N, seed=0, demand_range=(100.0, 300.0), size_range=(100.0, 300.0),
                beta_range=(1.0, 20.0), gamma_range=(3.0, 5.0),
                omega_range=(30.0, 50.0)) -> ProblemInstance:
    """Random instance: demand U(100,300); unit size p ~ U(100,300)/n with
    g_max = 2p, g_min = 0.5p; quadratic coefficients U(1,20), U(3,5),
    U(30,50); shared switch-on cost sum_j(beta_j p_j^2 + gamma_j p_j +
    omega_j)/(2n) and switch-off cost a quarter of that."""
    rng = np.random.default_rng(seed)
    D = rng.uniform(*demand_range, N)
    p = rng.uniform(*size_range, n) / n
    beta = rng.uniform(*beta_range, n)
    gam = rng.uniform(*gamma_range, n)
    om = rng.uniform(*omega_range, n)
    c01 = float(np.sum(beta * p * p + gam * p + om) / (2.0 * n))
    c10 = c01 / 4.0
    A = np.hstack([np.zeros((N, N)), -np.eye(N)])
    blocks = []
    for i in range(n):
        params = UCParams(c01=c01, c10=c10, beta=float(beta[i]), gamma_c=float(gam[i]),
                          omega=float(om[i]), g_min=float(0.5 * p[i]),
                          g_max=float(2.0 * p[i]), n_steps=N)
        blocks.append(BlockSpec(A=A.copy(), oracle=UnitCommitmentOracle(params),
                                dim=2 * N, app="uc", params=params.to_dict()))
    inst = ProblemInstance(n=n, m=N, blocks=blocks, b=-D)
    inst.batch_lmo = make_batch_lmo(blocks)
    return inst
