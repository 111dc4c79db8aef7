"""Second stage: cut the stage-1 atom pool down to a small per-block cover.

The stage-1 output, lifted by one unit-basis coordinate per block, is a
conic combination of at most n*K lifted atoms reproducing
``(z_final, 1_n)``. The exact path reduces it to at most ``1 + m + n``
columns (so all but at most ``m + 1`` blocks keep a single atom); the
approximate path instead projects ``w/n`` onto the hull of the pool with a
conditional-gradient solver and renormalizes per block.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .approx import fcfw, mnp
from .caratheodory import reduce_conic
from .columns import LiftedColumns
from .model import Atom, ProblemInstance
from .stage1 import FWTrace

__all__ = ["TrimResult", "UncoveredBlockError", "lift", "trim_exact", "trim_approx"]


class UncoveredBlockError(RuntimeError):
    """The approximate reduction left at least one block without an atom."""

    def __init__(self, blocks):
        super().__init__(f"uncovered block(s): {list(blocks)}")
        self.blocks = list(blocks)


@dataclass
class TrimResult:
    """Per-block convex combinations selected by a reduction.

    ``groups[i]`` lists ``(weight, atom)`` with weights summing to one per
    block; ``w_trim`` is the blockwise-normalized aggregate in R^{1+m} that
    the reconstruction bounds refer to. ``residual`` is measured on the
    unnormalized lifted vector (exact path: against it directly; approximate
    path: n times the hull-projection residual, same units).
    """

    groups: list[list[tuple[float, Atom]]]
    source: str
    residual: float
    w_trim: np.ndarray
    n_input_atoms: int
    history: Optional[np.ndarray] = None   # approximate-path residuals per step
    times: Optional[np.ndarray] = None

    @property
    def q(self) -> int:
        return sum(1 for g in self.groups if len(g) > 1)

    @property
    def entry_count(self) -> int:
        return sum(len(g) for g in self.groups)

    def block_weight_sums(self) -> np.ndarray:
        return np.array([sum(w for w, _ in g) for g in self.groups])

    def to_dict(self) -> dict:
        entries = []
        for i, group in enumerate(self.groups):
            for w, atom in group:
                entries.append({
                    "block": i,
                    "weight": float(w),
                    "iter": int(atom.iter),
                    "cost": float(atom.cost),
                    "point_sha1": hashlib.sha1(atom.key()).hexdigest()[:16],
                })
        return {"source": self.source, "residual": float(self.residual),
                "q": self.q, "entries": entries,
                "n_input_atoms": int(self.n_input_atoms)}


def lift(trace: FWTrace):
    """Lifted conic representation of the stage-1 output.

    Merges duplicate (block, point) atoms by summing their convex weights,
    drops zero-weight pool entries, and returns ``(columns, lam, w_full,
    block_of, pool_idx)`` with ``w_full = (z_final, 1_n)`` reproduced by
    construction as ``columns @ lam``.
    """
    n, m = trace.n, trace.m
    costs_parts, images_parts, blocks_parts = [], [], []
    lam_parts, pool_idx_parts, iter_parts = [], [], []
    for i in range(n):
        w = trace.merged_weights(i)
        nz = np.flatnonzero(w > 0.0)
        pool = trace.pools[i]
        costs_parts.append(pool.cost_array()[nz])
        images_parts.append(pool.image_matrix()[nz])
        blocks_parts.append(np.full(nz.shape[0], i, dtype=np.int64))
        lam_parts.append(w[nz])
        pool_idx_parts.append(nz)
        iter_parts.append(np.asarray(pool.first_iter, dtype=np.int64)[nz])
    costs = np.concatenate(costs_parts)
    images = np.vstack(images_parts).T            # (m, N)
    blocks = np.concatenate(blocks_parts)
    lam = np.concatenate(lam_parts)
    pool_idx = np.concatenate(pool_idx_parts)
    iters = np.concatenate(iter_parts)
    # stream columns iteration-major (all blocks of step 0 first, then step 1,
    # ...): the reduction's initial window then spans every block's basis row
    # instead of starting structurally singular
    order = np.lexsort((blocks, iters))
    costs, blocks, lam, pool_idx = costs[order], blocks[order], lam[order], pool_idx[order]
    images = np.ascontiguousarray(images[:, order])
    columns = LiftedColumns(costs, images, blocks, n)
    w_full = np.concatenate([trace.z_final, np.ones(n)])
    return columns, lam, w_full, blocks, pool_idx


def _atom_from_pool(trace: FWTrace, block: int, pool_idx: int) -> Atom:
    pool = trace.pools[block]
    return Atom(block=block, iter=pool.first_iter[pool_idx], point=pool.point(pool_idx),
                cost=float(pool.cost_array()[pool_idx]),
                image=pool.image_matrix()[pool_idx].copy())


def _build_result(trace: FWTrace, cols_idx, weights, blocks, pool_idx, source,
                  residual, n_input) -> TrimResult:
    n, m = trace.n, trace.m
    groups: list[list[tuple[float, Atom]]] = [[] for _ in range(n)]
    for col, w in zip(cols_idx, weights):
        i = int(blocks[col])
        groups[i].append((float(w), _atom_from_pool(trace, i, int(pool_idx[col]))))
    w_trim = np.zeros(1 + m)
    for group in groups:
        for w, atom in group:
            w_trim[0] += w * atom.cost
            w_trim[1:] += w * atom.image
    return TrimResult(groups=groups, source=source, residual=float(residual),
                      w_trim=w_trim, n_input_atoms=n_input)


def trim_exact(trace: FWTrace, instance: ProblemInstance, seed: int = 0, *,
               refactor_every: int = 512, debug_hook=None) -> TrimResult:
    """Exact path: at most ``1 + m + n`` surviving entries, per-block sums
    exactly one up to factorization drift."""
    columns, lam, w_full, blocks, pool_idx = lift(trace)
    alpha, kept = reduce_conic(columns, lam, seed, refactor_every=refactor_every,
                               debug_hook=debug_hook)
    agg = columns.aggregate(_scatter(alpha, kept, columns.n_cols))
    residual = float(np.linalg.norm(agg - w_full))
    return _build_result(trace, kept, alpha, blocks, pool_idx, "exact",
                         residual, columns.n_cols)


def _scatter(values, idx, n):
    out = np.zeros(n)
    out[idx] = values
    return out


def trim_approx(trace: FWTrace, instance: ProblemInstance, method: str, T: int,
                seed: int = 0, inner_tol: float = 1e-10) -> TrimResult:
    """Approximate path: project ``w/n`` onto the pool hull, regroup, and
    normalize weights per block.

    The solve runs in original units: the dominant cost coordinate
    converges first, after which the residual concentrates on the remaining
    rows and the oracle turns to constraint and block-coverage atoms (the
    corrective subproblems are solved exactly, so the scale disparity does
    not stall them). Raises :class:`UncoveredBlockError` when a block
    receives no weight; callers may raise T and retry.
    """
    if method not in ("fcfw", "mnp"):
        raise ValueError(f"unknown approximate method {method!r}")
    if T < trace.n - 1:
        raise ValueError(f"T must be at least n - 1 = {trace.n - 1}")
    columns, lam, w_full, blocks, pool_idx = lift(trace)
    target = w_full / trace.n
    if method == "fcfw":
        res = fcfw(columns, target, T, inner_tol=inner_tol)
    else:
        res = mnp(columns, target, T)
    idx, beta = res.nonzero()
    covered = np.zeros(trace.n, dtype=bool)
    covered[blocks[idx]] = True
    if not covered.all():
        raise UncoveredBlockError(np.flatnonzero(~covered))
    block_sums = np.bincount(blocks[idx], weights=beta, minlength=trace.n)
    alpha = beta / block_sums[blocks[idx]]
    approx_full = columns.aggregate(_scatter(beta, idx, columns.n_cols))
    residual = float(np.linalg.norm(trace.n * approx_full - w_full))
    out = _build_result(trace, idx, alpha, blocks, pool_idx, method,
                        residual, columns.n_cols)
    out.history = res.history
    out.times = res.times
    return out
