"""Instance (de)serialization: a canonical JSON document.

Layout: ``{"n": ..., "m": ..., "b": [...], "blocks": [{"A": [[row], ...],
"app": "uc"|"pev"|"quadratic-box", "params": {...}}]}``. Vectors are arrays
of decimals, matrices row-major (nested rows). Serialization is canonical
(sorted keys, shortest round-trip floats), so load -> dump is byte-stable.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import apps as apps_registry
from .model import BlockSpec, ProblemInstance

__all__ = ["instance_to_dict", "instance_from_dict", "dumps", "loads", "save", "load"]


def instance_to_dict(instance: ProblemInstance) -> dict:
    blocks = []
    for blk in instance.blocks:
        if not blk.app:
            raise ValueError("only app-backed blocks are serializable")
        blocks.append({"A": blk.A.tolist(), "app": blk.app, "params": blk.params})
    return {"n": instance.n, "m": instance.m, "b": instance.b.tolist(), "blocks": blocks}


def instance_from_dict(doc: dict) -> ProblemInstance:
    blocks = []
    for entry in doc["blocks"]:
        A = np.asarray(entry["A"], dtype=float)
        oracle = apps_registry.make_oracle(entry["app"], entry["params"])
        blocks.append(BlockSpec(A=A, oracle=oracle, dim=A.shape[1],
                                app=entry["app"], params=entry["params"]))
    inst = ProblemInstance(n=int(doc["n"]), m=int(doc["m"]), blocks=blocks,
                           b=np.asarray(doc["b"], dtype=float))
    inst.batch_lmo = apps_registry.make_batch_lmo(inst)
    return inst


def dumps(instance: ProblemInstance) -> str:
    return json.dumps(instance_to_dict(instance), sort_keys=True,
                      separators=(",", ":"), allow_nan=False)


def loads(text: str) -> ProblemInstance:
    return instance_from_dict(json.loads(text))


def save(instance: ProblemInstance, path) -> None:
    Path(path).write_text(dumps(instance) + "\n")


def load(path) -> ProblemInstance:
    return loads(Path(path).read_text())
