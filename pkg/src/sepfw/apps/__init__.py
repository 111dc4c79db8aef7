"""Application registry: oracle factories, generators, and per-app defaults."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..model import BlockSpec, ProblemInstance
from . import pev, quadbox, uc

GENERATORS = {
    "uc": uc.uc_generate,
    "pev": pev.pev_generate,
    "quadratic-box": quadbox.quadbox_generate,
}

_DEFAULT_SCHEME = {"uc": "repair", "pev": "max", "quadratic-box": "average"}

# theta(zeta) step per app, in units of the worst per-block row range; the
# fleet-charging rule escalates a whole horizon's worth at a time
_THETA_UNIT = {"uc": uc.theta_unit, "pev": pev.theta_unit, "quadratic-box": quadbox.theta_unit}


def make_oracle(app: str, params: dict):
    if app == "uc":
        return uc.UnitCommitmentOracle(uc.UCParams.from_dict(params))
    if app == "pev":
        return pev.PEVOracle(pev.PEVParams.from_dict(params))
    if app == "quadratic-box":
        return quadbox.QuadBoxOracle(quadbox.QuadBoxParams(
            q=params["q"], c=params["c"], lo=params["lo"], hi=params["hi"]))
    raise ValueError(f"unknown app {app!r}")


def app_of(instance: ProblemInstance) -> Optional[str]:
    """The uniform app name, or None for mixed/unnamed instances."""
    apps = {blk.app for blk in instance.blocks}
    if len(apps) == 1:
        name = apps.pop()
        return name or None
    return None


def make_batch_lmo(instance: ProblemInstance):
    name = app_of(instance)
    if name == "uc":
        return uc.make_batch_lmo(instance.blocks)
    if name == "pev":
        return pev.make_batch_lmo(instance.blocks)
    if name == "quadratic-box":
        return quadbox.make_batch_lmo(instance.blocks)
    return None


def default_scheme(instance: ProblemInstance) -> str:
    return _DEFAULT_SCHEME.get(app_of(instance) or "", "average")


def make_zeta_rule(instance: ProblemInstance) -> Callable[[int], np.ndarray]:
    """theta(zeta) for the perturbation loop; zero at zeta = 0."""
    name = app_of(instance)
    if name == "pev":
        unit = pev.theta_unit(instance)
        scale = instance.m  # one horizon's worth per escalation step
    elif name in _THETA_UNIT:
        unit = _THETA_UNIT[name](instance)
        scale = 1.0
    else:
        # generic: worst per-block row range probed through the oracles
        unit = np.zeros(instance.m)
        for blk in instance.blocks:
            hi = np.array([blk.A[k] @ blk.oracle.linmin(-blk.A[k]) for k in range(instance.m)])
            lo = np.array([blk.A[k] @ blk.oracle.linmin(blk.A[k]) for k in range(instance.m)])
            unit = np.maximum(unit, hi - lo)
        scale = 1.0

    def rule(zeta: int) -> np.ndarray:
        return float(zeta) * scale * unit

    return rule
