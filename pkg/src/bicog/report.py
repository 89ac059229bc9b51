"""Byte-stable JSON emission for run reports.

Floats are written with 17 significant digits so a replay with the same
seeds reproduces files exactly. Non-finite floats are rejected; undefined
values must be passed as None and come out as ``null``.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable

import numpy as np

SCHEMA_VERSION = 1


def _float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} in report")
    text = format(x, ".17g")
    # keep floats recognizable as floats after a round trip
    return text if any(ch in text for ch in ".e") else text + ".0"


def dumps(obj: Any) -> str:
    """Compact JSON with sorted keys and fixed-precision floats."""
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ",".join(f"{json.dumps(k)}:{dumps(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def with_schema(record: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, **record}


def write_json(path: Path, payload: dict) -> None:
    Path(path).write_text(dumps(with_schema(payload)) + "\n")


def write_jsonl(path: Path, records: Iterable[dict]) -> None:
    Path(path).write_text("".join(dumps(with_schema(r)) + "\n" for r in records))


def read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
