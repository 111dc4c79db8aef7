"""Two-stage solver for separable nonconvex problems with affine coupling.

Stage one runs a conditional-gradient method whose linear oracle is one
Fenchel-conjugate call per block, driving an aggregate of extreme points
toward the target (dual value, right-hand side). Stage two reduces the
resulting conic combination, exactly or approximately, until all but a few
blocks are represented by a single atom, and reconstructs a primal
candidate whose duality gap scales with the number of coupling rows rather
than the number of blocks.
"""

from .config import SolverConfig
from .kernels import BACKEND
from .model import (Atom, BlockOracle, BlockSpec, EvalResult, ProblemInstance,
                    WeightedAtoms, evaluate, plus_norm)

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "BACKEND",
    "BlockOracle",
    "BlockSpec",
    "EvalResult",
    "ProblemInstance",
    "SolverConfig",
    "WeightedAtoms",
    "evaluate",
    "plus_norm",
    "__version__",
]
