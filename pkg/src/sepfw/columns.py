"""Column-set abstraction shared by the reduction algorithms.

The trimming stage works with up to ``n * K`` lifted columns; materializing
them densely is wasteful since each is (cost, image, unit-basis block tag).
Both the exact reduction and the conditional-gradient solvers only need
inner products with all columns plus random access to single columns, so
they accept either a dense matrix or this compact form.
"""

from __future__ import annotations

from typing import Optional, Union

import numpy as np

__all__ = ["DenseColumns", "LiftedColumns", "as_columns"]


class DenseColumns:
    def __init__(self, W: np.ndarray):
        self.W = np.ascontiguousarray(np.asarray(W, float))
        self.dim, self.n_cols = self.W.shape

    def scores(self, v: np.ndarray) -> np.ndarray:
        return self.W.T @ v

    def column(self, j: int) -> np.ndarray:
        return self.W[:, j].copy()

    def get(self, js) -> np.ndarray:
        return self.W[:, js].copy()

    def sqnorms(self) -> np.ndarray:
        return np.einsum("ij,ij->j", self.W, self.W)

    def aggregate(self, weights: np.ndarray) -> np.ndarray:
        return self.W @ weights

    def kernel_payload(self):
        return {"dense": self.W}


class LiftedColumns:
    """Columns ``(costs[j], images[:, j], e_{blocks[j]})``, optionally row-scaled."""

    def __init__(self, costs, images, blocks, n_blocks: int,
                 row_scale: Optional[np.ndarray] = None):
        self.costs = np.ascontiguousarray(costs, dtype=float)
        self.images = np.ascontiguousarray(images, dtype=float)   # (m, N)
        self.blocks = np.ascontiguousarray(blocks, dtype=np.int64)
        self.n_blocks = int(n_blocks)
        self.m = self.images.shape[0]
        self.dim = 1 + self.m + self.n_blocks
        self.n_cols = self.costs.shape[0]
        self.row_scale = None if row_scale is None else np.asarray(row_scale, float)

    def scaled(self, row_scale: np.ndarray) -> "LiftedColumns":
        return LiftedColumns(self.costs, self.images, self.blocks, self.n_blocks,
                             row_scale=row_scale)

    def scores(self, v: np.ndarray) -> np.ndarray:
        vs = v if self.row_scale is None else v * self.row_scale
        out = self.costs * vs[0]
        out += self.images.T @ vs[1:1 + self.m]
        out += vs[1 + self.m:][self.blocks]
        return out

    def column(self, j: int) -> np.ndarray:
        out = np.zeros(self.dim)
        out[0] = self.costs[j]
        out[1:1 + self.m] = self.images[:, j]
        out[1 + self.m + self.blocks[j]] = 1.0
        if self.row_scale is not None:
            out *= self.row_scale
        return out

    def get(self, js) -> np.ndarray:
        js = np.asarray(js, dtype=np.int64)
        out = np.zeros((self.dim, js.shape[0]))
        out[0] = self.costs[js]
        out[1:1 + self.m] = self.images[:, js]
        out[1 + self.m + self.blocks[js], np.arange(js.shape[0])] = 1.0
        if self.row_scale is not None:
            out *= self.row_scale[:, None]
        return out

    def sqnorms(self) -> np.ndarray:
        if self.row_scale is None:
            return self.costs**2 + np.einsum("ij,ij->j", self.images, self.images) + 1.0
        r = self.row_scale
        out = (r[0] * self.costs) ** 2
        simg = r[1:1 + self.m, None] * self.images
        out += np.einsum("ij,ij->j", simg, simg)
        out += r[1 + self.m:][self.blocks] ** 2
        return out

    def aggregate(self, weights: np.ndarray) -> np.ndarray:
        out = np.zeros(self.dim)
        out[0] = self.costs @ weights
        out[1:1 + self.m] = self.images @ weights
        out[1 + self.m:] = np.bincount(self.blocks, weights=weights,
                                       minlength=self.n_blocks)
        if self.row_scale is not None:
            out *= self.row_scale
        return out

    def kernel_payload(self):
        if self.row_scale is not None:
            raise ValueError("the exact reduction works on unscaled columns")
        return {"lifted": (self.costs, self.images, self.blocks, self.n_blocks)}


ColumnSet = Union[DenseColumns, LiftedColumns]


def as_columns(obj) -> ColumnSet:
    if isinstance(obj, (DenseColumns, LiftedColumns)):
        return obj
    return DenseColumns(np.asarray(obj, float))
