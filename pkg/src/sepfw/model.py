"""Problem representation, block-oracle contract and shared numerics.

A problem instance is a collection of ``n`` blocks, each with its own cost
function (accessed only through a :class:`BlockOracle`) and a coupling matrix
``A_i`` with ``m`` rows; the blocks interact only through the joint constraint
``sum_i A_i x_i <= b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "plus_norm",
    "evaluate",
    "BlockOracle",
    "BlockSpec",
    "ProblemInstance",
    "Atom",
    "WeightedAtoms",
    "EvalResult",
    "OracleError",
]

INF = math.inf


class OracleError(RuntimeError):
    """A block oracle failed; carries the offending block index."""

    def __init__(self, block: int, message: str):
        super().__init__(f"block {block}: {message}")
        self.block = block


def plus_norm(v) -> float:
    """Euclidean norm of the componentwise positive part.

    Zero exactly when every component is <= 0. Used throughout as the
    one-sided measure of constraint violation.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite input")
    pos = np.maximum(v, 0.0)
    mx = float(pos.max(initial=0.0))
    if mx == 0.0:
        return 0.0
    # scale before squaring: subnormal entries must not flush to zero
    scaled = pos / mx
    return mx * float(np.sqrt(scaled @ scaled))


class BlockOracle:
    """Capability contract for a single block.

    Implementations must guarantee:

    * ``value(x)`` returns the block cost, ``+inf`` outside the domain;
    * ``conjugate(y)`` returns ``(sup_x {y.x - f(x)}, argmax)`` with the
      argmax a member of the domain itself (not merely its convex hull) and a
      deterministic tie rule;
    * ``linmin(c)`` returns a domain member minimizing ``c.x`` over the convex
      hull of the domain (an extreme point);
    * ``repair(x)``, when the class defines it, maps a hull point to a domain
      point whose coupling image ``A x_hat`` is componentwise no larger.

    ``repair`` stays ``None`` when the domain does not support it.
    ``gamma_bound`` returns ``sup f - inf f`` over the domain when that is
    cheaply available, else ``None``.
    """

    dim: int

    repair: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def conjugate(self, y: np.ndarray) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def linmin(self, c: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gamma_bound(self) -> Optional[float]:
        return None


@dataclass
class BlockSpec:
    """One block: coupling matrix, oracle handle, and serializable identity."""

    A: np.ndarray
    oracle: BlockOracle
    dim: int
    app: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.ascontiguousarray(np.asarray(self.A, dtype=float))
        if self.A.ndim != 2:
            raise ValueError("A must be a matrix")
        if self.A.shape[1] != self.dim:
            raise ValueError(f"A has {self.A.shape[1]} columns, oracle dim is {self.dim}")
        if getattr(self.oracle, "dim", self.dim) != self.dim:
            raise ValueError("oracle dimension mismatch")


@dataclass
class ProblemInstance:
    """Blocks coupled by ``sum_i A_i x_i <= b``.

    ``batch_lmo``, when present, is a fast path with the same contract as the
    per-block oracles: ``batch_lmo(alpha, g) -> (costs, points, images)``
    returns, for every block at once, the minimizer of
    ``alpha * f_i**(x) + g . (A_i x)`` over the hull, as arrays of shape
    ``(n,)``, ``(n, d)`` and ``(n, m)``. It must agree with the per-block
    path exactly.
    """

    n: int
    m: int
    blocks: list[BlockSpec]
    b: np.ndarray
    batch_lmo: Optional[Callable] = None

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.n < 1 or self.m < 1:
            raise ValueError("need n >= 1 and m >= 1")
        if len(self.blocks) != self.n:
            raise ValueError(f"expected {self.n} blocks, got {len(self.blocks)}")
        if self.b.shape != (self.m,):
            raise ValueError(f"b must have length {self.m}")
        for i, blk in enumerate(self.blocks):
            if blk.A.shape[0] != self.m:
                raise ValueError(f"block {i}: A has {blk.A.shape[0]} rows, expected {self.m}")
            if blk.dim < 1:
                raise ValueError(f"block {i}: dimension must be >= 1")

    def with_b(self, b_new: np.ndarray) -> "ProblemInstance":
        """Same blocks and oracles with a replaced right-hand side."""
        return ProblemInstance(self.n, self.m, self.blocks, np.asarray(b_new, float),
                               batch_lmo=self.batch_lmo)

    @property
    def dims(self) -> list[int]:
        return [blk.dim for blk in self.blocks]


@dataclass
class Atom:
    """One extreme-point record produced by a block oracle.

    ``cost`` and ``image`` are re-evaluable from ``point`` through the block
    oracle and coupling matrix. Identity is the ``(block, point)`` content;
    ``key()`` is the dedup key used by the atom pools.
    """

    block: int
    iter: int
    point: np.ndarray
    cost: float
    image: np.ndarray

    def key(self) -> bytes:
        return np.ascontiguousarray(self.point, dtype=float).tobytes()


@dataclass
class WeightedAtoms:
    """Nonnegative weights over atoms; aggregates as sum_l w_l (cost, image)."""

    entries: list[tuple[float, Atom]]

    def __post_init__(self):
        for w, _ in self.entries:
            if w < 0:
                raise ValueError("weights must be nonnegative")

    def aggregate(self, m: int) -> np.ndarray:
        """Weighted sum of lifted atoms as a vector (cost, image) in R^{1+m}."""
        out = np.zeros(1 + m)
        for w, atom in self.entries:
            out[0] += w * atom.cost
            out[1:] += w * atom.image
        return out

    def total_weight(self) -> float:
        return float(sum(w for w, _ in self.entries))


@dataclass
class EvalResult:
    """Objective and signed constraint residual of a candidate solution."""

    objective: float
    violation: np.ndarray
    block_values: list[float]

    @property
    def violation_plus(self) -> float:
        return plus_norm(self.violation)

    @property
    def feasible_blocks(self) -> list[bool]:
        return [math.isfinite(v) for v in self.block_values]


def evaluate(instance: ProblemInstance, x: Sequence[np.ndarray]) -> EvalResult:
    """Evaluate a candidate solution through the value oracles.

    Returns the total objective (``+inf`` if any block point lies outside its
    domain; the per-block values identify which) and the signed constraint
    residual ``sum_i A_i x_i - b``.
    """
    if len(x) != instance.n:
        raise ValueError(f"expected {instance.n} block points, got {len(x)}")
    block_values = []
    violation = -instance.b.copy()
    for i, (blk, xi) in enumerate(zip(instance.blocks, x)):
        xi = np.asarray(xi, dtype=float).reshape(-1)
        if xi.shape != (blk.dim,):
            raise ValueError(f"block {i}: point has dimension {xi.shape[0]}, expected {blk.dim}")
        block_values.append(float(blk.oracle.value(xi)))
        violation += blk.A @ xi
    objective = INF if any(not math.isfinite(v) for v in block_values) else float(sum(block_values))
    return EvalResult(objective=objective, violation=violation, block_values=block_values)
