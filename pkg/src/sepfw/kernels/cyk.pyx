# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: conjugate recursions and the conic reduction loop.

Semantics mirror ``pyback`` exactly (same tie rules, same summation order);
the package __init__ picks whichever backend imported.
"""

import numpy as np

from libc.math cimport fabs, hypot, sqrt
from libc.stdlib cimport free, malloc

from .pyback import DegenerateSystemError


def uc_conjugate_batch(c01, c10, beta, gam, omega, gmin, gmax, V, P):
    """See ``pyback.uc_conjugate_batch``; per-block DP in C loops."""
    cdef double[::1] c01v = np.ascontiguousarray(c01, dtype=np.float64)
    cdef double[::1] c10v = np.ascontiguousarray(c10, dtype=np.float64)
    cdef double[::1] betav = np.ascontiguousarray(beta, dtype=np.float64)
    cdef double[::1] gamv = np.ascontiguousarray(gam, dtype=np.float64)
    cdef double[::1] omv = np.ascontiguousarray(omega, dtype=np.float64)
    cdef double[::1] gminv = np.ascontiguousarray(gmin, dtype=np.float64)
    cdef double[::1] gmaxv = np.ascontiguousarray(gmax, dtype=np.float64)
    cdef double[:, ::1] Vm = np.ascontiguousarray(V, dtype=np.float64)
    cdef double[:, ::1] Pm = np.ascontiguousarray(P, dtype=np.float64)
    cdef Py_ssize_t nb = Vm.shape[0], N = Vm.shape[1]
    fstar_a = np.empty(nb)
    U_a = np.zeros((nb, N))
    G_a = np.zeros((nb, N))
    cost_a = np.zeros(nb)
    cdef double[::1] fstar = fstar_a
    cdef double[:, ::1] U = U_a
    cdef double[:, ::1] G = G_a
    cdef double[::1] cost = cost_a
    cdef double *gst = <double *> malloc(N * sizeof(double))
    cdef double *qmx = <double *> malloc(N * sizeof(double))
    cdef signed char *fr0 = <signed char *> malloc(N)
    cdef signed char *fr1 = <signed char *> malloc(N)
    cdef Py_ssize_t b, k
    cdef double d0, d1, sw0, sw1, nd0, v, g, uprev, c
    cdef int st
    if gst == NULL or qmx == NULL or fr0 == NULL or fr1 == NULL:
        raise MemoryError
    try:
        for b in range(nb):
            for k in range(N):
                v = (Pm[b, k] - gamv[b]) / (2.0 * betav[b])
                if v < gminv[b]:
                    v = gminv[b]
                elif v > gmaxv[b]:
                    v = gmaxv[b]
                gst[k] = v
                qmx[k] = Pm[b, k] * v - (betav[b] * v * v + gamv[b] * v + omv[b])
            d0 = 0.0
            d1 = Vm[b, 0] - c01v[b] + qmx[0]
            for k in range(1, N):
                sw0 = d1 - c10v[b]
                fr0[k] = 1 if d0 < sw0 else 0
                nd0 = sw0 if d0 < sw0 else d0
                sw1 = d0 - c01v[b]
                fr1[k] = 1 if d1 >= sw1 else 0
                d1 = (d1 if d1 >= sw1 else sw1) + Vm[b, k] + qmx[k]
                d0 = nd0
            fstar[b] = d1 if d1 > d0 else d0
            st = 1 if d1 > d0 else 0
            for k in range(N - 1, -1, -1):
                if st == 1:
                    U[b, k] = 1.0
                    G[b, k] = gst[k]
                    if k > 0:
                        st = fr1[k]
                else:
                    if k > 0:
                        st = fr0[k]
            uprev = 0.0
            c = 0.0
            for k in range(N):
                g = G[b, k]
                if U[b, k] > 0.5:
                    c = c + (c01v[b] * (1.0 - uprev) + betav[b] * g * g
                             + gamv[b] * g + omv[b])
                else:
                    c = c + c10v[b] * uprev
                uprev = U[b, k]
            cost[b] = c
    finally:
        free(gst)
        free(qmx)
        free(fr0)
        free(fr1)
    return fstar_a, U_a, G_a, cost_a


def uc_value_batch(c01, c10, beta, gam, omega, U, G):
    cdef double[::1] c01v = np.ascontiguousarray(c01, dtype=np.float64)
    cdef double[::1] c10v = np.ascontiguousarray(c10, dtype=np.float64)
    cdef double[::1] betav = np.ascontiguousarray(beta, dtype=np.float64)
    cdef double[::1] gamv = np.ascontiguousarray(gam, dtype=np.float64)
    cdef double[::1] omv = np.ascontiguousarray(omega, dtype=np.float64)
    cdef double[:, ::1] Um = np.ascontiguousarray(U, dtype=np.float64)
    cdef double[:, ::1] Gm = np.ascontiguousarray(G, dtype=np.float64)
    cdef Py_ssize_t nb = Um.shape[0], N = Um.shape[1]
    cost_a = np.zeros(nb)
    cdef double[::1] cost = cost_a
    cdef Py_ssize_t b, k
    cdef double uprev, g, c
    for b in range(nb):
        uprev = 0.0
        c = 0.0
        for k in range(N):
            g = Gm[b, k]
            if Um[b, k] > 0.5:
                c = c + (c01v[b] * (1.0 - uprev) + betav[b] * g * g
                         + gamv[b] * g + omv[b])
            else:
                c = c + c10v[b] * uprev
            uprev = Um[b, k]
        cost[b] = c
    return cost_a


def pev_greedy_batch(gains, lo, hi):
    """See ``pyback.pev_greedy_batch``; stable insertion sort per row."""
    cdef double[:, ::1] gm = np.ascontiguousarray(gains, dtype=np.float64)
    cdef long[::1] lom = np.ascontiguousarray(lo, dtype=np.int64)
    cdef long[::1] him = np.ascontiguousarray(hi, dtype=np.int64)
    cdef Py_ssize_t nb = gm.shape[0], N = gm.shape[1]
    val_a = np.zeros(nb)
    U_a = np.zeros((nb, N))
    cdef double[::1] val = val_a
    cdef double[:, ::1] U = U_a
    cdef Py_ssize_t *idx = <Py_ssize_t *> malloc(N * sizeof(Py_ssize_t))
    cdef Py_ssize_t b, i, j, npos, k, keyi
    cdef double key, s
    if idx == NULL:
        raise MemoryError
    try:
        for b in range(nb):
            for i in range(N):
                idx[i] = i
            # stable insertion sort, descending by gain
            for i in range(1, N):
                keyi = idx[i]
                key = gm[b, keyi]
                j = i - 1
                while j >= 0 and gm[b, idx[j]] < key:
                    idx[j + 1] = idx[j]
                    j -= 1
                idx[j + 1] = keyi
            npos = 0
            for i in range(N):
                if gm[b, idx[i]] > 0.0:
                    npos += 1
                else:
                    break
            k = npos
            if k < lom[b]:
                k = lom[b]
            if k > him[b]:
                k = him[b]
            s = 0.0
            for i in range(k):
                s += gm[b, idx[i]]
                U[b, idx[i]] = 1.0
            val[b] = s
    finally:
        free(idx)
    return val_a, U_a


# ---------------------------------------------------------------------------
# conic reduction loop

cdef struct Work:
    Py_ssize_t p1          # rows of the working window
    double *Q              # p1 x p1, row-major
    double *R              # p1 x p1, row-major (nc columns in use)
    double *A              # true window columns, for iterative refinement
    Py_ssize_t nc


cdef void _rotate(Work *w, Py_ssize_t i, double c, double s, Py_ssize_t c0) noexcept:
    cdef Py_ssize_t p1 = w.p1, j
    cdef double a, b
    for j in range(c0, w.nc):
        a = w.R[i * p1 + j]
        b = w.R[(i + 1) * p1 + j]
        w.R[i * p1 + j] = c * a + s * b
        w.R[(i + 1) * p1 + j] = -s * a + c * b
    for j in range(p1):
        a = w.Q[j * p1 + i]
        b = w.Q[j * p1 + i + 1]
        w.Q[j * p1 + i] = c * a + s * b
        w.Q[j * p1 + i + 1] = -s * a + c * b


cdef void _factorize(Work *w) noexcept:
    # Givens triangularization of the current true window w.A
    cdef Py_ssize_t p1 = w.p1, nc = w.nc, i, j
    cdef double a, b, h, c, s
    for i in range(p1 * p1):
        w.Q[i] = 0.0
    for i in range(p1):
        w.Q[i * p1 + i] = 1.0
    for i in range(p1):
        for j in range(nc):
            w.R[i * p1 + j] = w.A[i * p1 + j]
    for j in range(nc):
        for i in range(p1 - 1, j, -1):
            b = w.R[i * p1 + j]
            if b != 0.0:
                a = w.R[(i - 1) * p1 + j]
                h = hypot(a, b)
                c = a / h
                s = b / h
                _rotate(w, i - 1, c, s, j)
                w.R[i * p1 + j] = 0.0


cdef int _backsolve(Work *w, double *rhs, double *out, double sing_tol) noexcept:
    # out = R^{-1} Q^T rhs; 0 on success, 1 if R is near singular
    cdef Py_ssize_t p1 = w.p1, i, j
    cdef double fro = 0.0, dmin = -1.0, a, acc
    for i in range(p1):
        for j in range(w.nc):
            a = w.R[i * p1 + j]
            fro += a * a
    fro = sqrt(fro)
    for i in range(p1):
        a = fabs(w.R[i * p1 + i])
        if dmin < 0.0 or a < dmin:
            dmin = a
    if fro == 0.0 or dmin < sing_tol * fro:
        return 1
    for i in range(p1):
        acc = 0.0
        for j in range(p1):
            acc += w.Q[j * p1 + i] * rhs[j]
        out[i] = acc
    for i in range(p1 - 1, -1, -1):
        acc = out[i]
        for j in range(i + 1, p1):
            acc -= w.R[i * p1 + j] * out[j]
        out[i] = acc / w.R[i * p1 + i]
    return 0


cdef int _solve_refined(Work *w, double *delta, double *r, double *corr,
                        double sing_tol) noexcept:
    # solve window @ delta = e_{p1-1} with one refinement step against the
    # true window; a bad refined residual counts as singular
    cdef Py_ssize_t p1 = w.p1, i, j
    cdef double acc, nrm, fro, dn
    for i in range(p1):
        r[i] = 0.0
    r[p1 - 1] = 1.0
    if _backsolve(w, r, delta, sing_tol):
        return 1
    for i in range(p1):
        acc = 0.0
        for j in range(p1):
            acc += w.A[i * p1 + j] * delta[j]
        r[i] = (1.0 if i == p1 - 1 else 0.0) - acc
    if _backsolve(w, r, corr, sing_tol):
        return 1
    for i in range(p1):
        delta[i] += corr[i]
    nrm = 0.0
    fro = 0.0
    dn = 0.0
    for i in range(p1):
        acc = 0.0
        for j in range(p1):
            acc += w.A[i * p1 + j] * delta[j]
            fro += w.A[i * p1 + j] * w.A[i * p1 + j]
        dn += delta[i] * delta[i]
        acc -= 1.0 if i == p1 - 1 else 0.0
        nrm += acc * acc
    if sqrt(nrm) > 1e-8 * (1.0 + sqrt(fro) * sqrt(dn)):
        return 1
    return 0


cdef void _delete_col(Work *w, Py_ssize_t idx) noexcept:
    cdef Py_ssize_t p1 = w.p1, i, j
    cdef double a, b, h, c, s
    for i in range(p1):
        for j in range(idx, w.nc - 1):
            w.R[i * p1 + j] = w.R[i * p1 + j + 1]
            w.A[i * p1 + j] = w.A[i * p1 + j + 1]
    w.nc -= 1
    for i in range(idx, w.nc):
        b = w.R[(i + 1) * p1 + i]
        if b != 0.0:
            a = w.R[i * p1 + i]
            h = hypot(a, b)
            c = a / h
            s = b / h
            _rotate(w, i, c, s, i)
            w.R[(i + 1) * p1 + i] = 0.0


cdef void _append_col(Work *w, double *col) noexcept:
    # Q^T col lands with its diagonal on the last row: triangular already
    cdef Py_ssize_t p1 = w.p1, i, j
    cdef double acc
    for i in range(p1):
        acc = 0.0
        for j in range(p1):
            acc += w.Q[j * p1 + i] * col[j]
        w.R[i * p1 + w.nc] = acc
        w.A[i * p1 + w.nc] = col[i]
    w.nc += 1


cdef class _Columns:
    """Column source: dense matrix or compact lifted arrays plus the u row."""

    cdef double[:, ::1] Wd
    cdef double[::1] costs
    cdef double[:, ::1] images
    cdef long[::1] blocks
    cdef double[:, ::1] uv
    cdef Py_ssize_t m, nb, p, u_idx
    cdef bint is_dense

    cdef void fill(self, double *out, Py_ssize_t j) noexcept:
        cdef Py_ssize_t i
        if self.is_dense:
            for i in range(self.p):
                out[i] = self.Wd[i, j]
        else:
            out[0] = self.costs[j]
            for i in range(self.m):
                out[1 + i] = self.images[i, j]
            for i in range(self.nb):
                out[1 + self.m + i] = 0.0
            out[1 + self.m + self.blocks[j]] = 1.0
        out[self.p] = self.uv[self.u_idx, j]


cdef void _window(_Columns src, Work *w, long[::1] cols,
                  Py_ssize_t nc, double *tmp) noexcept:
    cdef Py_ssize_t c, i
    for c in range(nc):
        src.fill(tmp, cols[c])
        for i in range(w.p1):
            w.A[i * w.p1 + c] = tmp[i]
    w.nc = nc
    _factorize(w)


def exact_carath_core(lam, u_rows, dense=None, lifted=None, *,
                      double sing_tol=1e-12, Py_ssize_t refactor_every=512,
                      debug_hook=None):
    """See ``pyback.exact_carath_core``; the whole loop runs in C."""
    lam_a = np.ascontiguousarray(lam, dtype=np.float64)
    cdef double[::1] lamv = lam_a
    cdef Py_ssize_t N = lamv.shape[0]

    cdef _Columns src = _Columns()
    src.uv = np.ascontiguousarray(u_rows, dtype=np.float64)
    src.u_idx = 0
    if dense is not None:
        src.Wd = np.ascontiguousarray(dense, dtype=np.float64)
        src.costs = np.empty(0)
        src.images = np.empty((0, 0))
        src.blocks = np.empty(0, dtype=np.int64)
        src.m = 0
        src.nb = 0
        src.p = src.Wd.shape[0]
        src.is_dense = True
    else:
        src.Wd = np.empty((0, 0))
        src.costs = np.ascontiguousarray(lifted[0], dtype=np.float64)
        src.images = np.ascontiguousarray(lifted[1], dtype=np.float64)
        src.blocks = np.ascontiguousarray(lifted[2], dtype=np.int64)
        src.nb = <Py_ssize_t> lifted[3]
        src.m = src.images.shape[0]
        src.p = 1 + src.m + src.nb
        src.is_dense = False
    cdef Py_ssize_t p = src.p, p1 = p + 1
    if N <= p:
        raise ValueError("caller must handle N <= p")

    cols_a = np.empty(p1, dtype=np.int64)
    alpha_a = np.empty(p1)
    cdef long[::1] cols = cols_a
    cdef double[::1] alpha = alpha_a
    cdef Py_ssize_t i
    for i in range(p1):
        cols[i] = i
        alpha[i] = lamv[i]

    cdef Work w
    w.p1 = p1
    w.Q = <double *> malloc(p1 * p1 * sizeof(double))
    w.R = <double *> malloc(p1 * p1 * sizeof(double))
    w.A = <double *> malloc(p1 * p1 * sizeof(double))
    cdef double *colbuf = <double *> malloc(p1 * sizeof(double))
    cdef double *delta = <double *> malloc(p1 * sizeof(double))
    cdef double *rbuf = <double *> malloc(p1 * sizeof(double))
    cdef double *cbuf = <double *> malloc(p1 * sizeof(double))
    if (w.Q == NULL or w.R == NULL or w.A == NULL or colbuf == NULL
            or delta == NULL or rbuf == NULL or cbuf == NULL):
        free(w.Q); free(w.R); free(w.A); free(colbuf)
        free(delta); free(rbuf); free(cbuf)
        raise MemoryError

    cdef Py_ssize_t next_col = p1, nc = p1, updates = 0, j_star
    cdef double t_star, r, dmax, amin
    cdef bint have_pos, solved

    try:
        _window(src, &w, cols, nc, colbuf)
        while True:
            if debug_hook is not None:
                debug_hook(cols_a[:nc].copy(), alpha_a[:nc].copy(), int(next_col))
            solved = False
            while not solved:
                if _solve_refined(&w, delta, rbuf, cbuf, sing_tol) == 0:
                    solved = True
                    break
                if src.u_idx + 1 >= src.uv.shape[0]:
                    if _lstsq_fallback(src, cols, nc, delta):
                        solved = True
                        break
                    raise DegenerateSystemError("degenerate system")
                src.u_idx += 1
                _window(src, &w, cols, nc, colbuf)
            dmax = delta[0]
            for i in range(1, nc):
                if delta[i] > dmax:
                    dmax = delta[i]
            if dmax <= 0.0:
                for i in range(nc):
                    delta[i] = -delta[i]
            # pivoting on noise-level entries would blow up t*
            dmax = 0.0
            for i in range(nc):
                if fabs(delta[i]) > dmax:
                    dmax = fabs(delta[i])
            have_pos = False
            t_star = 0.0
            for i in range(nc):
                if delta[i] > 1e-12 * dmax:
                    r = alpha[i] / delta[i]
                    if not have_pos or r < t_star:
                        t_star = r
                        have_pos = True
            if not have_pos:
                raise DegenerateSystemError("degenerate system: null direction")
            amin = 0.0
            j_star = 0
            for i in range(nc):
                alpha[i] = alpha[i] - t_star * delta[i]
                if i == 0 or alpha[i] < amin:
                    amin = alpha[i]
                    j_star = i
            for i in range(j_star, nc - 1):
                alpha[i] = alpha[i + 1]
                cols[i] = cols[i + 1]
            _delete_col(&w, j_star)
            nc -= 1
            updates += 1
            if next_col >= N:
                break
            cols[nc] = next_col
            alpha[nc] = lamv[next_col]
            src.fill(colbuf, next_col)
            _append_col(&w, colbuf)
            nc += 1
            if refactor_every > 0 and updates % refactor_every == 0:
                _window(src, &w, cols, nc, colbuf)
            next_col += 1
        for i in range(nc):
            if alpha[i] <= 0.0:
                alpha[i] = 0.0
        return alpha_a[:nc].copy(), cols_a[:nc].copy()
    finally:
        free(w.Q)
        free(w.R)
        free(w.A)
        free(colbuf)
        free(delta)
        free(rbuf)
        free(cbuf)


cdef bint _lstsq_fallback(_Columns src, long[::1] cols, Py_ssize_t nc, double *delta):
    # minimum-norm solve of a consistent singular window (see pyback)
    cdef Py_ssize_t p1 = src.p + 1, c, i
    win = np.empty((p1, nc))
    tmp_a = np.empty(p1)
    cdef double[::1] tv = tmp_a
    for c in range(nc):
        src.fill(&tv[0], cols[c])
        for i in range(p1):
            win[i, c] = tv[i]
    rhs = np.zeros(p1)
    rhs[p1 - 1] = 1.0
    sol = np.linalg.lstsq(win, rhs, rcond=None)[0]
    gate = 1e-8 * (1.0 + np.linalg.norm(win) * np.linalg.norm(sol))
    if np.linalg.norm(win @ sol - rhs) > gate:
        return False
    for i in range(nc):
        delta[i] = sol[i]
    return True
