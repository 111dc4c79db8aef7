"""Pure-Python (numpy) implementations of the hot kernels.

Mirrors the compiled extension in ``cyk.pyx``; the package selects one of the
two at import time. Each function is vectorized over blocks where possible,
but the conic reduction loop is inherently sequential.
"""

from __future__ import annotations

import numpy as np

from ..qr import QRState, SingularFactorError

__all__ = [
    "uc_conjugate_batch",
    "uc_value_batch",
    "pev_greedy_batch",
    "exact_carath_core",
    "DegenerateSystemError",
]


class DegenerateSystemError(RuntimeError):
    """The (p+1)x(p+1) solve failed for every available random row."""


def uc_conjugate_batch(c01, c10, beta, gam, omega, gmin, gmax, V, P):
    """On/off quadratic-production conjugate for all blocks at once.

    Dynamic program over (time step, on/off state); the inner maximization of
    ``p*g - (beta g^2 + gam g + omega)`` over ``[gmin, gmax]`` is a clamped
    quadratic vertex. Ties prefer staying in the current state; the final
    state tie prefers off.

    Parameters are per-block arrays of shape ``(nb,)``; ``V`` and ``P`` are
    ``(nb, N)`` direction components for the on/off and production
    coordinates. Returns ``(fstar, U, G, cost)`` where ``cost`` re-evaluates
    the produced schedule with the same summation order as the value oracle.
    """
    V = np.asarray(V, float)
    P = np.asarray(P, float)
    nb, N = V.shape
    gstar = np.clip((P - gam[:, None]) / (2.0 * beta[:, None]),
                    gmin[:, None], gmax[:, None])
    qmax = P * gstar - (beta[:, None] * gstar * gstar
                        + gam[:, None] * gstar + omega[:, None])
    from0 = np.zeros((nb, N), dtype=np.int8)
    from1 = np.zeros((nb, N), dtype=np.int8)
    d0 = np.zeros(nb)
    d1 = V[:, 0] - c01 + qmax[:, 0]
    for k in range(1, N):
        sw0 = d1 - c10
        from0[:, k] = d0 < sw0               # 1: predecessor was on
        new0 = np.maximum(d0, sw0)
        sw1 = d0 - c01
        from1[:, k] = d1 >= sw1              # 1: predecessor was on (stay wins ties)
        d1 = np.maximum(sw1, d1) + V[:, k] + qmax[:, k]
        d0 = new0
    fstar = np.maximum(d0, d1)
    U = np.zeros((nb, N))
    G = np.zeros((nb, N))
    state = (d1 > d0).astype(np.int8)        # final tie -> off
    for k in range(N - 1, -1, -1):
        on = state == 1
        U[:, k] = np.where(on, 1.0, 0.0)
        G[:, k] = np.where(on, gstar[:, k], 0.0)
        if k > 0:
            state = np.where(on, from1[:, k], from0[:, k]).astype(np.int8)
    cost = uc_value_batch(c01, c10, beta, gam, omega, U, G)
    return fstar, U, G, cost


def uc_value_batch(c01, c10, beta, gam, omega, U, G):
    """Switching plus quadratic production cost of given schedules.

    All units start off at step 0. No domain checks here; callers validate.
    """
    U = np.asarray(U, float)
    G = np.asarray(G, float)
    nb, N = U.shape
    cost = np.zeros(nb)
    uprev = np.zeros(nb)
    for k in range(N):
        on = U[:, k] > 0.5
        g = G[:, k]
        on_cost = c01 * (1.0 - uprev) + beta * g * g + gam * g + omega
        off_cost = c10 * uprev
        cost += np.where(on, on_cost, off_cost)
        uprev = U[:, k]
    return cost


def pev_greedy_batch(gains, lo, hi):
    """Maximize ``sum_k gains_k u_k`` over binary schedules with a count band.

    The feasible schedules are exactly those with between ``lo`` and ``hi``
    steps switched on, so the exact maximizer takes every strictly positive
    gain, then pads with the least-negative gains up to ``lo`` or truncates
    to the ``hi`` best. Stable sort keeps equal gains in index order.
    """
    gains = np.asarray(gains, float)
    nb, N = gains.shape
    order = np.argsort(-gains, axis=1, kind="stable")
    sg = np.take_along_axis(gains, order, axis=1)
    npos = (sg > 0.0).sum(axis=1)
    k = np.clip(npos, lo, hi)
    pick = np.arange(N)[None, :] < k[:, None]
    val = np.where(pick, sg, 0.0).sum(axis=1)
    U = np.zeros((nb, N))
    np.put_along_axis(U, order, pick.astype(float), axis=1)
    return val, U


def _lifted_column(lifted, j, out):
    costs, images, blocks, nb = lifted
    m = images.shape[0]
    out[0] = costs[j]
    out[1:1 + m] = images[:, j]
    out[1 + m:1 + m + nb] = 0.0
    out[1 + m + blocks[j]] = 1.0


def exact_carath_core(lam, u_rows, dense=None, lifted=None, *,
                      sing_tol=1e-12, refactor_every=512, debug_hook=None):
    """Sequential conic reduction from N columns to at most p.

    Columns come either from a dense ``(p, N)`` matrix or from a compact
    lifted representation ``(costs, images, block_ids, n_blocks)`` whose
    column j is ``(costs[j], images[:, j], e_{block_ids[j]})``. ``u_rows``
    holds one random unit row per allowed redraw; a fresh row is swapped in
    whenever the working factorization turns singular.

    Returns ``(alpha, kept)`` with ``len(kept) == p``; entries of ``alpha``
    may be zero. Raises :class:`DegenerateSystemError` when every redraw
    fails.
    """
    lam = np.asarray(lam, float)
    N = lam.shape[0]
    if dense is not None:
        dense = np.asarray(dense, float)
        p = dense.shape[0]

        def fill(j, out):
            out[:p] = dense[:, j]
    else:
        costs, images, blocks, nb = lifted
        p = 1 + images.shape[0] + nb

        def fill(j, out):
            _lifted_column(lifted, j, out)

    p1 = p + 1
    if N <= p:
        raise ValueError("caller must handle N <= p")

    u_idx = 0
    u = u_rows[u_idx]
    cols = list(range(p1))
    alpha = lam[:p1].copy()
    rhs = np.zeros(p1)
    rhs[p] = 1.0
    buf = np.empty(p1)

    def window():
        W = np.empty((p1, len(cols)))
        for c, j in enumerate(cols):
            fill(j, W[:, c])
            W[p, c] = u[j]
        return W

    def solve_refined(state, Awin):
        # one step of iterative refinement against the true window keeps the
        # per-iteration null-space error near roundoff; a bad post-refinement
        # residual is treated like a singular factorization
        delta = state.solve(rhs, sing_tol)
        delta = delta + state.solve(rhs - Awin @ delta, sing_tol)
        gate = 1e-8 * (1.0 + np.linalg.norm(Awin) * np.linalg.norm(delta))
        if np.linalg.norm(Awin @ delta - rhs) > gate:
            raise SingularFactorError("ill-conditioned window")
        return delta

    Awin = window()
    state = QRState(Awin)
    next_col = p1
    updates = 0
    while True:
        if debug_hook is not None:
            debug_hook(np.asarray(cols), alpha.copy(), next_col)
        delta = None
        while delta is None:
            try:
                delta = solve_refined(state, Awin)
            except SingularFactorError:
                u_idx += 1
                if u_idx >= u_rows.shape[0]:
                    # singular through every redraw: the window is rank
                    # deficient for any last row. The system is still
                    # consistent whenever the tall block has a null vector,
                    # so fall back to a minimum-norm solve.
                    delta, _, _, _ = np.linalg.lstsq(Awin, rhs, rcond=None)
                    gate = 1e-8 * (1.0 + np.linalg.norm(Awin) * np.linalg.norm(delta))
                    if np.linalg.norm(Awin @ delta - rhs) > gate:
                        raise DegenerateSystemError("degenerate system") from None
                    break
                u = u_rows[u_idx]
                Awin = window()
                state = QRState(Awin)
        if np.max(delta) <= 0.0:
            delta = -delta
        # pivoting on noise-level entries would blow up t*; treat them as 0
        pos = delta > 1e-12 * np.max(np.abs(delta))
        if not np.any(pos):
            raise DegenerateSystemError("degenerate system: null direction")
        t_star = np.min(alpha[pos] / delta[pos])
        alpha = alpha - t_star * delta
        j_star = int(np.argmin(alpha))        # ties -> smallest index
        alpha = np.delete(alpha, j_star)
        del cols[j_star]
        state.delete_column(j_star)
        Awin = np.delete(Awin, j_star, axis=1)
        updates += 1
        if next_col >= N:
            break
        cols.append(next_col)
        alpha = np.append(alpha, lam[next_col])
        fill(next_col, buf)
        buf[p] = u[next_col]
        state.insert_column(buf)
        Awin = np.hstack([Awin, buf[:, None]])
        if refactor_every and updates % refactor_every == 0:
            state = QRState(Awin)
        next_col += 1
    alpha = np.where(alpha > 0.0, alpha, 0.0)
    return alpha, np.asarray(cols, dtype=np.int64)
