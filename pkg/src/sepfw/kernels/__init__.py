"""Hot-kernel backend selection.

The compiled extension is preferred when it imported cleanly; set
``SEPFW_BACKEND=py`` (or ``c``) to force a choice. ``load_backend`` gives
direct access to a named backend, e.g. for the benchmark script.
"""

from __future__ import annotations

import os

from . import pyback
from .pyback import DegenerateSystemError

try:
    from . import cyk as _cyk
except ImportError:            # extension not built on this install
    _cyk = None

_forced = os.environ.get("SEPFW_BACKEND", "").lower()
if _forced in ("py", "python"):
    _impl = pyback
elif _forced in ("c", "compiled", "cy"):
    if _cyk is None:
        raise ImportError("SEPFW_BACKEND=c requested but the compiled kernels are unavailable")
    _impl = _cyk
else:
    _impl = _cyk if _cyk is not None else pyback

BACKEND = "compiled" if _impl is _cyk and _cyk is not None else "python"

uc_conjugate_batch = _impl.uc_conjugate_batch
uc_value_batch = _impl.uc_value_batch
pev_greedy_batch = _impl.pev_greedy_batch
exact_carath_core = _impl.exact_carath_core


def load_backend(name: str):
    """Return a specific backend module: "python" or "compiled"."""
    if name in ("py", "python"):
        return pyback
    if name in ("c", "compiled", "cy"):
        if _cyk is None:
            raise ImportError("compiled kernels are unavailable")
        return _cyk
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    return ["python"] + (["compiled"] if _cyk is not None else [])
