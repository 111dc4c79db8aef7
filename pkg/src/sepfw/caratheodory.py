"""Exact conic reduction: N-term conic combinations cut down to at most p.

Columns leave and enter a (p+1)-square working system one at a time; an
appended random unit row rules out the trivial null vector, and the QR
factorization of the window is updated rather than rebuilt (see ``qr``).
Complexity O(N p^2).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .columns import ColumnSet, DenseColumns, as_columns
from .kernels import DegenerateSystemError

__all__ = [
    "ConicInput",
    "ConicOutput",
    "exact_caratheodory",
    "reduce_conic",
    "DegenerateSystemError",
    "InconsistentInputError",
]


class InconsistentInputError(ValueError):
    """The provided weights do not reproduce the target vector."""


@dataclass
class ConicInput:
    """Target ``w_star`` with a known conic representation ``W @ lam``."""

    W: np.ndarray
    lam: np.ndarray
    w_star: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, float)
        self.lam = np.asarray(self.lam, float).reshape(-1)
        self.w_star = np.asarray(self.w_star, float).reshape(-1)
        if self.W.ndim != 2 or self.W.shape[1] != self.lam.shape[0]:
            raise ValueError("W and lam shapes disagree")
        if self.W.shape[0] != self.w_star.shape[0]:
            raise ValueError("W and w_star shapes disagree")
        if np.any(self.lam < 0):
            raise ValueError("weights must be nonnegative")

    def residual(self) -> float:
        return float(np.linalg.norm(self.W @ self.lam - self.w_star))


@dataclass
class ConicOutput:
    """Reduced representation: at most p strictly positive weights."""

    alpha: np.ndarray
    kept: np.ndarray

    def __len__(self) -> int:
        return int(self.alpha.shape[0])


def reduce_conic(columns: ColumnSet, lam: np.ndarray, seed: int, *,
                 max_redraws: int = 5, sing_tol: float = 1e-12,
                 refactor_every: int = 512, debug_hook=None) -> tuple[np.ndarray, np.ndarray]:
    """Shared reduction driver over an abstract column set.

    Zero-weight columns are dropped up front; when at most ``dim`` columns
    remain the input already is a valid output. Returns ``(alpha, kept)``
    restricted to strictly positive weights, deterministic given ``seed``.
    """
    lam = np.asarray(lam, float)
    pos = np.flatnonzero(lam > 0.0)
    p = columns.dim
    if pos.shape[0] <= p:
        return lam[pos].copy(), pos.astype(np.int64)
    rng = np.random.default_rng(seed)
    u_rows = rng.normal(size=(max_redraws + 1, columns.n_cols))
    u_rows /= np.linalg.norm(u_rows, axis=1, keepdims=True)
    # the working windows mix coordinates of very different magnitudes (cost
    # ~1e4 against unit basis rows); row equilibration leaves the null spaces,
    # and hence the algorithm's output, unchanged while fixing conditioning.
    # The unit-sphere u row is rescaled to a comparable magnitude (only the
    # normalization of delta changes, which cancels in t* delta).
    u_rows *= np.sqrt(columns.n_cols)

    if pos.shape[0] == lam.shape[0]:
        sub_lam = lam
        payload = columns.kernel_payload()
        sub_idx = None
    else:
        # compact the surviving columns so the kernel sees contiguous data
        sub_lam = lam[pos]
        u_rows = np.ascontiguousarray(u_rows[:, pos])
        sub_idx = pos
        payload = _restrict_payload(columns, pos)
    payload = _equilibrate(payload)

    alpha, kept = kernels.exact_carath_core(sub_lam, u_rows, sing_tol=sing_tol,
                                            refactor_every=refactor_every,
                                            debug_hook=debug_hook, **payload)
    if sub_idx is not None:
        kept = sub_idx[kept]
    alpha = _polish(columns, lam, alpha, kept)
    nz = alpha > 0.0
    return alpha[nz], kept[nz]


def _equilibrate(payload: dict) -> dict:
    if "dense" in payload:
        W = payload["dense"]
        scale = np.max(np.abs(W), axis=1, keepdims=True)
        scale[scale == 0.0] = 1.0
        return {"dense": np.ascontiguousarray(W / scale)}
    costs, images, blocks, nb = payload["lifted"]
    cscale = max(float(np.max(np.abs(costs))), 1e-300) if costs.size else 1.0
    iscale = np.max(np.abs(images), axis=1, keepdims=True)
    iscale[iscale == 0.0] = 1.0
    return {"lifted": (np.ascontiguousarray(costs / cscale),
                       np.ascontiguousarray(images / iscale), blocks, nb)}


def _polish(columns: ColumnSet, lam: np.ndarray, alpha: np.ndarray,
            kept: np.ndarray) -> np.ndarray:
    """Re-solve the kept weights by nonnegative least squares.

    The update loop accumulates solve roundoff in alpha over N - p rank-one
    steps; the kept set is what matters, so a final small NNLS against the
    target recovers full accuracy. Kept only when it improves.
    """
    from scipy.optimize import nnls

    w_star = columns.aggregate(lam)
    Wk = columns.get(kept)
    try:
        polished, res_new = nnls(Wk, w_star)
    except Exception:
        return alpha
    scatter = np.zeros(columns.n_cols)
    scatter[kept] = alpha
    res_old = float(np.linalg.norm(columns.aggregate(scatter) - w_star))
    return polished if res_new <= res_old else alpha


def _restrict_payload(columns: ColumnSet, idx: np.ndarray) -> dict:
    payload = columns.kernel_payload()
    if "dense" in payload:
        return {"dense": np.ascontiguousarray(payload["dense"][:, idx])}
    costs, images, blocks, nb = payload["lifted"]
    return {"lifted": (np.ascontiguousarray(costs[idx]),
                       np.ascontiguousarray(images[:, idx]),
                       np.ascontiguousarray(blocks[idx]), nb)}


def exact_caratheodory(inp: ConicInput, rng_seed: int = 0, *, max_redraws: int = 5,
                       sing_tol: float = 1e-12, refactor_every: int = 512,
                       debug_csv: Optional[str] = None) -> ConicOutput:
    """Reduce a consistent conic input to at most p strictly positive terms.

    Raises :class:`InconsistentInputError` when ``W lam`` misses ``w_star``
    beyond tolerance and :class:`DegenerateSystemError` when the working
    solve stays singular through ``max_redraws`` fresh random rows.
    ``debug_csv`` dumps the per-iteration invariant residual
    ``||W_window alpha - (w_star - tail)||`` for inspection.
    """
    res = inp.residual()
    if res > 1e-8 * (1.0 + float(np.linalg.norm(inp.w_star))):
        raise InconsistentInputError(
            f"inconsistent input: ||W lam - w_star|| = {res:.3e}")
    pos = np.flatnonzero(inp.lam > 0.0)
    W, lam, w_star = inp.W[:, pos], inp.lam[pos], inp.w_star
    hook = None
    rows: list[tuple] = []
    if debug_csv is not None:

        def hook(active, alpha, next_col):
            tail = W[:, next_col:] @ lam[next_col:] if next_col < lam.shape[0] \
                else np.zeros_like(w_star)
            resid = np.linalg.norm(W[:, active] @ alpha - (w_star - tail))
            rows.append((len(rows), next_col, resid))

    alpha, kept = reduce_conic(DenseColumns(W), lam, rng_seed, max_redraws=max_redraws,
                               sing_tol=sing_tol, refactor_every=refactor_every,
                               debug_hook=hook)
    kept = pos[kept]
    if debug_csv is not None:
        with open(debug_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "next_col", "invariant_residual"])
            writer.writerows(rows)
    return ConicOutput(alpha=alpha, kept=kept)
