"""Solver configuration shared across pipeline stages."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional


@dataclass
class SolverConfig:
    """Tolerances and per-stage knobs; every invariant check references these.

    ``v_star`` bypasses the dual solve entirely when set (e.g. when an
    external solver of the convex relaxation supplies the optimal value).
    """

    tol_feas: float = 1e-8
    tol_rel: float = 1e-6

    dual_max_iter: int = 5000
    dual_step0: Optional[float] = None        # default 1/(1+||b||)
    dual_stop_tol: float = 1e-6               # relative improvement threshold
    dual_patience: int = 200
    dual_method: str = "subgradient"          # "subgradient" | "lbfgsb"
    v_star: Optional[float] = None

    fw_K: int = 10000
    fw_step_rule: str = "exact"               # "exact" | "harmonic"
    fw_stop_tol: float = 0.0

    carath_method: str = "mnp"                # "exact" | "fcfw" | "mnp"
    trim_T: Optional[int] = None              # default n + m
    refactor_every: int = 512

    scheme: str = "auto"                      # "average"|"sample"|"repair"|"max"|"auto"
    zeta_max: int = 10
    check_every: int = 0                      # periodic feasibility checks, 0 = off

    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)
