"""Convex blocks: diagonal quadratic cost over a box.

The reference convex application: every domain is a box (so hull == domain),
costs are strictly convex separable quadratics, and the conjugate argmax is a
clamped vertex in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import BlockOracle, BlockSpec, ProblemInstance

__all__ = ["QuadBoxParams", "QuadBoxOracle", "quadbox_generate", "make_batch_lmo", "theta_unit"]


@dataclass
class QuadBoxParams:
    q: np.ndarray      # curvature per coordinate, > 0
    c: np.ndarray      # linear term
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, float)
        self.c = np.asarray(self.c, float)
        self.lo = np.asarray(self.lo, float)
        self.hi = np.asarray(self.hi, float)
        if not np.all(self.q > 0):
            raise ValueError("need q > 0")
        if not np.all(self.lo <= self.hi):
            raise ValueError("need lo <= hi")

    def to_dict(self) -> dict:
        return {"q": self.q.tolist(), "c": self.c.tolist(),
                "lo": self.lo.tolist(), "hi": self.hi.tolist()}


def _cost_rows(q, c, X):
    # shared by the scalar and batched paths so recorded atom costs match the
    # value oracle bit for bit; fixed-order accumulation keeps (1, d) and
    # (n, d) evaluations identical, unlike a vectorized reduction
    out = np.zeros(X.shape[:-1])
    q = np.broadcast_to(q, X.shape)
    c = np.broadcast_to(c, X.shape)
    for j in range(X.shape[-1]):
        xj = X[..., j]
        out = out + (q[..., j] * xj * xj + c[..., j] * xj)
    return out


class QuadBoxOracle(BlockOracle):
    def __init__(self, params: QuadBoxParams):
        self.p = params
        self.dim = params.q.shape[0]
        self._eps = 1e-9 * (1.0 + float(np.max(np.abs(np.concatenate([params.lo, params.hi])))))

    def value(self, x):
        p = self.p
        if np.any(x < p.lo - self._eps) or np.any(x > p.hi + self._eps):
            return np.inf
        return float(_cost_rows(p.q, p.c, x[None, :])[0])

    def conjugate(self, y):
        p = self.p
        x = np.clip((y - p.c) / (2.0 * p.q), p.lo, p.hi)
        return float(y @ x) - float(_cost_rows(p.q, p.c, x[None, :])[0]), x

    def linmin(self, c):
        # box corner; ties (zero coefficient) pick the lower bound
        return np.where(c >= 0, self.p.lo, self.p.hi).astype(float)

    def repair(self, x):
        # hull == domain; clip only absorbs roundoff
        return np.clip(x, self.p.lo, self.p.hi)

    def gamma_bound(self):
        p = self.p
        per_hi = np.maximum(p.q * p.lo**2 + p.c * p.lo, p.q * p.hi**2 + p.c * p.hi)
        vert = np.clip(-p.c / (2.0 * p.q), p.lo, p.hi)
        per_lo = p.q * vert**2 + p.c * vert
        return float(np.sum(per_hi - per_lo))


class _QuadBoxBatch:
    """Vectorized LMO over homogeneous quadratic-box blocks."""

    def __init__(self, blocks: list[BlockSpec]):
        self.A = np.stack([b.A for b in blocks])                  # (n, m, d)
        self.q = np.stack([b.oracle.p.q for b in blocks])
        self.c = np.stack([b.oracle.p.c for b in blocks])
        self.lo = np.stack([b.oracle.p.lo for b in blocks])
        self.hi = np.stack([b.oracle.p.hi for b in blocks])

    def __call__(self, alpha, g):
        d = np.einsum("imd,m->id", self.A, g)
        if alpha > 0:
            y = -d / alpha
            X = np.clip((y - self.c) / (2.0 * self.q), self.lo, self.hi)
        else:
            X = np.where(d >= 0, self.lo, self.hi)
        costs = _cost_rows(self.q, self.c, X)
        images = np.einsum("imd,id->im", self.A, X)
        return costs, X, images


def make_batch_lmo(blocks: list[BlockSpec]):
    dims = {b.dim for b in blocks}
    if len(dims) != 1:
        return None
    return _QuadBoxBatch(blocks)


def theta_unit(instance: ProblemInstance) -> np.ndarray:
    """Per-row maximum over blocks of the coupling-image range over the box."""
    out = np.zeros(instance.m)
    for blk in instance.blocks:
        p = blk.oracle.p
        # row range of A x over the box: sum_j |A_kj| (hi_j - lo_j)
        rng = np.abs(blk.A) @ (p.hi - p.lo)
        out = np.maximum(out, rng)
    return out


def quadbox_generate(n, d=4, m=5, seed=0, tighten=0.25) -> ProblemInstance:
    """Random convex instance with moderately active coupling constraints.

    ``b`` is set below the image of the unconstrained block minimizers by
    ``tighten`` times the mean per-block image range, so the constraints are
    active but the optimal multipliers stay moderate.
    """
    rng = np.random.default_rng(seed)
    blocks = []
    img_unc = np.zeros(m)
    ranges = np.zeros(m)
    for _ in range(n):
        A = rng.normal(size=(m, d)) / np.sqrt(d)
        q = rng.uniform(0.5, 2.0, d)
        c = rng.uniform(-1.0, 1.0, d)
        half = rng.uniform(0.5, 1.5, d)
        center = rng.uniform(-0.5, 0.5, d)
        params = QuadBoxParams(q=q, c=c, lo=center - half, hi=center + half)
        oracle = QuadBoxOracle(params)
        blocks.append(BlockSpec(A=A, oracle=oracle, dim=d,
                                app="quadratic-box", params=params.to_dict()))
        x_unc = np.clip(-c / (2.0 * q), params.lo, params.hi)
        img_unc += A @ x_unc
        ranges += np.abs(A) @ (params.hi - params.lo)
    b = img_unc - tighten * (ranges / n)
    inst = ProblemInstance(n=n, m=m, blocks=blocks, b=b)
    inst.batch_lmo = make_batch_lmo(blocks)
    return inst
