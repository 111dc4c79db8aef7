"""Approximate reductions: project a target onto the hull of a column set.

Two conditional-gradient solvers for
``min ||sum_l beta_l s_l - target||^2`` over the simplex: the fully
corrective variant re-solves a simplex least squares over its active set at
every step, the min-norm-point variant (Wolfe) optimizes over affine hulls
with minor cycles stepping back into the simplex. Both converge linearly on
polytopes; the second trades a weaker exponent for much cheaper iterations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .columns import as_columns

__all__ = ["project_simplex", "simplex_ls", "fcfw", "mnp", "ApproxResult", "SimplexLSInfo"]


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort + threshold)."""
    v = np.asarray(v, float)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite input")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.shape[0] + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


@dataclass
class SimplexLSInfo:
    converged: bool
    iterations: int
    kkt: float


def simplex_ls(S: np.ndarray, target: np.ndarray, tol: float = 1e-10,
               max_iter: int = 5000, warm: Optional[np.ndarray] = None):
    """Least squares over the simplex by projected gradient.

    Step 1/L with L estimated by 20 power iterations on the Gram matrix;
    stops at a projected-gradient fixed point within ``tol`` (sup norm of
    the update). Returns ``(beta, info)``; ``info.converged`` is False when
    the iteration budget ran out, with the best iterate returned.
    """
    S = np.asarray(S, float)
    k = S.shape[1]
    if k == 1:
        return np.array([1.0]), SimplexLSInfo(True, 0, 0.0)
    G = S.T @ S
    h = S.T @ np.asarray(target, float)
    v = np.full(k, 1.0 / np.sqrt(k))
    for _ in range(20):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        v = w / nw
    L = max(float(v @ (G @ v)), 1e-12)
    beta = project_simplex(warm) if warm is not None else np.full(k, 1.0 / k)
    kkt = np.inf
    for it in range(max_iter):
        grad = G @ beta - h
        beta_new = project_simplex(beta - grad / L)
        kkt = float(np.max(np.abs(beta_new - beta)))
        beta = beta_new
        if kkt <= tol:
            return beta, SimplexLSInfo(True, it + 1, kkt)
    return beta, SimplexLSInfo(False, max_iter, kkt)


@dataclass
class ApproxResult:
    """Weights over the touched columns; ``indices`` refer to the input set."""

    indices: np.ndarray
    beta: np.ndarray
    residual: float
    history: np.ndarray
    stalled: bool = False
    times: Optional[np.ndarray] = None

    def nonzero(self) -> tuple[np.ndarray, np.ndarray]:
        mask = self.beta > 0.0
        return self.indices[mask], self.beta[mask]


def _merge_active(active: list[int], beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx, inv = np.unique(np.asarray(active, dtype=np.int64), return_inverse=True)
    merged = np.zeros(idx.shape[0])
    np.add.at(merged, inv, beta)
    return idx, merged


def _correction_exact(S: np.ndarray, target: np.ndarray):
    """Exact simplex least squares over a small active set.

    Runs the min-norm-point machinery on the active columns to optimality;
    unlike projected gradient this is robust to the huge scale disparities
    of lifted columns (cost coordinates ~1e4 against unit block tags).
    """
    res = mnp(S, target, T=3 * S.shape[1] + 10, tol=1e-14)
    beta = np.zeros(S.shape[1])
    beta[res.indices] = res.beta
    return beta, res.stalled


def fcfw(columns, target, T: int, inner: str = "exact", inner_tol: float = 1e-10,
         inner_max_iter: int = 5000) -> ApproxResult:
    """Fully corrective conditional gradient toward ``target``.

    Starts from the nearest column; each iteration adds the column
    minimizing the linearized objective (lowest index on ties, re-selection
    of an active column still counts) and fully re-optimizes the simplex
    weights over the active set. ``inner`` picks the correction solver:
    "exact" (active-set, default) or "pg" (projected gradient,
    :func:`simplex_ls`).
    """
    cols = as_columns(columns)
    target = np.asarray(target, float)
    if T < 1:
        raise ValueError("T must be >= 1")
    if inner not in ("exact", "pg"):
        raise ValueError(f"unknown inner solver {inner!r}")
    start = int(np.argmin(cols.sqnorms() - 2.0 * cols.scores(target)))
    active = [start]
    S = cols.get(np.array([start]))
    beta = np.array([1.0])
    w = S @ beta
    history = [float(np.linalg.norm(w - target))]
    t0 = time.perf_counter()
    times = [0.0]
    stalled = False
    for _ in range(T):
        j = int(np.argmin(cols.scores(w - target)))
        active.append(j)
        S = np.hstack([S, cols.column(j)[:, None]])
        if inner == "exact":
            beta, bad = _correction_exact(S, target)
        else:
            beta, info = simplex_ls(S, target, tol=inner_tol,
                                    max_iter=inner_max_iter,
                                    warm=np.append(beta, 0.0))
            bad = not info.converged
        stalled = stalled or bad
        w = S @ beta
        history.append(float(np.linalg.norm(w - target)))
        times.append(time.perf_counter() - t0)
    idx, merged = _merge_active(active, beta)
    return ApproxResult(indices=idx, beta=merged, residual=history[-1],
                        history=np.asarray(history), stalled=stalled,
                        times=np.asarray(times))


class _AffineFactor:
    """Cholesky factor of S^T S + 1 1^T maintained under append/delete.

    The affine-hull least-squares weights are ``M^{-1} 1`` normalized to sum
    one; a small diagonal triggers refactorization, rank deficiency falls
    back to a least-squares solve of the optimality system.
    """

    def __init__(self):
        self.S = None          # (p, k) shifted active columns
        self.R = None          # upper-triangular, R^T R = S^T S + 1 1^T

    def append(self, s: np.ndarray):
        if self.S is None:
            self.S = s[:, None].copy()
            self.R = np.array([[np.sqrt(s @ s + 1.0)]])
            return
        m = self.S.T @ s + 1.0
        mu = float(s @ s + 1.0)
        self.S = np.hstack([self.S, s[:, None]])
        if self.R is not None:
            from scipy.linalg import solve_triangular
            try:
                r = solve_triangular(self.R, m, trans="T", lower=False)
                rho2 = mu - float(r @ r)
                if rho2 > 1e-12 * mu:
                    k = self.R.shape[0]
                    Rn = np.zeros((k + 1, k + 1))
                    Rn[:k, :k] = self.R
                    Rn[:k, k] = r
                    Rn[k, k] = np.sqrt(rho2)
                    self.R = Rn
                    return
            except Exception:
                pass
        self._refactor()

    def delete(self, idx: int):
        self.S = np.delete(self.S, idx, axis=1)
        self._refactor()

    def _refactor(self):
        M = self.S.T @ self.S + 1.0
        try:
            self.R = np.linalg.cholesky(M).T
        except np.linalg.LinAlgError:
            self.R = None          # rank-deficient active set

    def affine_weights(self) -> np.ndarray:
        k = self.S.shape[1]
        if self.R is not None:
            from scipy.linalg import solve_triangular
            y = solve_triangular(self.R, np.ones(k), trans="T", lower=False)
            y = solve_triangular(self.R, y, lower=False)
            ssum = float(y.sum())
            if abs(ssum) > 1e-300:
                return y / ssum
        # optimality system, minimum-norm solution
        G = self.S.T @ self.S
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = G
        kkt[:k, k] = 1.0
        kkt[k, :k] = 1.0
        rhs = np.zeros(k + 1)
        rhs[k] = 1.0
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        return sol[:k]


def mnp(columns, target, T: int, tol: float = 1e-12,
        minor_cap: Optional[int] = None) -> ApproxResult:
    """Min-norm-point reduction toward ``target`` (Wolfe's algorithm).

    Major cycles add the linear-minimization atom; minor cycles solve the
    affine-hull least squares and step back to the relative interior,
    dropping zeroed atoms, so retained weights stay strictly positive.
    Terminates on T major cycles or optimality
    ``w.(w - s) <= tol * ||w||^2`` (in target-shifted coordinates); a global
    cycling guard aborts after ``10 T`` minor cycles with the best iterate.
    """
    cols = as_columns(columns)
    target = np.asarray(target, float)
    if T < 1:
        raise ValueError("T must be >= 1")
    if minor_cap is None:
        minor_cap = 10 * T
    shift = float(target @ target)
    sqn = cols.sqnorms() - 2.0 * cols.scores(target) + shift   # ||s - target||^2
    start = int(np.argmin(sqn))
    active = [start]
    factor = _AffineFactor()
    factor.append(cols.column(start) - target)
    beta = np.array([1.0])
    w = factor.S @ beta
    history = [float(np.linalg.norm(w))]
    t0 = time.perf_counter()
    times = [0.0]
    minors = 0
    stalled = False
    drop_tol = 1e-12
    for _ in range(T):
        scores = cols.scores(w) - float(target @ w)      # (s - target) . w
        j = int(np.argmin(scores))
        ww = float(w @ w)
        if ww - float(scores[j]) <= tol * max(ww, 1e-30):
            break
        if j in active:
            break                                        # numerically stuck
        active.append(j)
        factor.append(cols.column(j) - target)
        beta = np.append(beta, 0.0)
        while True:
            cand = factor.affine_weights()
            if np.min(cand) >= -drop_tol:
                beta = np.maximum(cand, 0.0)
                beta /= beta.sum()
                break
            minors += 1
            neg = cand < -drop_tol
            theta = np.min(beta[neg] / (beta[neg] - cand[neg]))
            beta = (1.0 - theta) * beta + theta * cand
            beta[beta < drop_tol] = 0.0
            drop = np.flatnonzero(beta == 0.0)
            for d in drop[::-1]:
                del active[d]
                factor.delete(int(d))
            beta = beta[beta > 0.0]
            beta /= beta.sum()
            if minors > minor_cap:
                stalled = True
                break
        w = factor.S @ beta
        history.append(float(np.linalg.norm(w)))
        times.append(time.perf_counter() - t0)
        if stalled:
            break
    idx, merged = _merge_active(active, beta)
    return ApproxResult(indices=idx, beta=merged, residual=history[-1],
                        history=np.asarray(history), stalled=stalled,
                        times=np.asarray(times))
