"""QR factorization maintained under column deletion and insertion.

The working matrix has a fixed number of rows ``r`` and at most ``r``
columns; deletions re-triangularize the factor with Givens rotations in
O(r^2), insertions append ``Q^T a`` and zero any entries below the new
diagonal. This is the linear-algebra core of the conic reduction loop.
"""

from __future__ import annotations

import numpy as np

__all__ = ["QRState", "qr_insert_column", "qr_delete_column", "qr_solve", "SingularFactorError"]


class SingularFactorError(RuntimeError):
    """A diagonal of R fell below the singularity threshold."""


def _givens(a: float, b: float) -> tuple[float, float]:
    """Rotation (c, s) with [c s; -s c] @ [a; b] = [r; 0]."""
    if b == 0.0:
        return 1.0, 0.0
    h = np.hypot(a, b)
    return a / h, b / h


class QRState:
    """Holds Q (r x r orthonormal) and R (r x k upper triangular)."""

    def __init__(self, A: np.ndarray):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[1] > A.shape[0]:
            raise ValueError("need a tall or square matrix")
        self.rows = A.shape[0]
        self.q, r = np.linalg.qr(A, mode="complete")
        self.r = np.zeros((self.rows, A.shape[1]))
        self.r[: r.shape[0], :] = r

    @property
    def cols(self) -> int:
        return self.r.shape[1]

    def matrix(self) -> np.ndarray:
        """Reconstruct the current working matrix Q @ R."""
        return self.q @ self.r

    def _rotate_rows(self, i: int, c: float, s: float, from_col: int) -> None:
        # rows (i, i+1) of R, columns (i, i+1) of Q
        ri, rj = self.r[i, from_col:].copy(), self.r[i + 1, from_col:].copy()
        self.r[i, from_col:] = c * ri + s * rj
        self.r[i + 1, from_col:] = -s * ri + c * rj
        qi, qj = self.q[:, i].copy(), self.q[:, i + 1].copy()
        self.q[:, i] = c * qi + s * qj
        self.q[:, i + 1] = -s * qi + c * qj

    def insert_column(self, col: np.ndarray) -> None:
        """Append a column; restores triangularity in O(r^2)."""
        col = np.asarray(col, dtype=float).reshape(-1)
        if col.shape[0] != self.rows:
            raise ValueError("column length mismatch")
        if self.cols >= self.rows:
            raise ValueError("factorization is already square")
        w = self.q.T @ col
        k = self.cols  # new column index, diagonal at row k
        for i in range(self.rows - 2, k - 1, -1):
            if w[i + 1] != 0.0:
                c, s = _givens(w[i], w[i + 1])
                wi, wj = w[i], w[i + 1]
                w[i], w[i + 1] = c * wi + s * wj, 0.0
                qi, qj = self.q[:, i].copy(), self.q[:, i + 1].copy()
                self.q[:, i] = c * qi + s * qj
                self.q[:, i + 1] = -s * qi + c * qj
        self.r = np.hstack([self.r, w[:, None]])

    def delete_column(self, idx: int) -> None:
        """Remove column ``idx``; Givens sweep restores triangularity."""
        if not 0 <= idx < self.cols:
            raise IndexError("column index out of range")
        self.r = np.delete(self.r, idx, axis=1)
        for i in range(idx, self.cols):
            if self.r[i + 1, i] != 0.0:
                c, s = _givens(self.r[i, i], self.r[i + 1, i])
                self._rotate_rows(i, c, s, i)
                self.r[i + 1, i] = 0.0

    def solve(self, rhs: np.ndarray, sing_tol: float = 1e-12) -> np.ndarray:
        """Solve A x = rhs for the current square working matrix."""
        if self.cols != self.rows:
            raise ValueError("solve requires a square working matrix")
        scale = float(np.linalg.norm(self.r))
        diag = np.abs(np.diag(self.r))
        if scale == 0.0 or np.min(diag) < sing_tol * scale:
            raise SingularFactorError("singular R")
        y = self.q.T @ np.asarray(rhs, dtype=float).reshape(-1)
        from scipy.linalg import solve_triangular

        return solve_triangular(self.r, y, lower=False)


def qr_insert_column(state: QRState, col: np.ndarray) -> QRState:
    state.insert_column(col)
    return state


def qr_delete_column(state: QRState, idx: int) -> QRState:
    state.delete_column(idx)
    return state


def qr_solve(state: QRState, rhs: np.ndarray) -> np.ndarray:
    return state.solve(rhs)
