"""Deterministic JSON serialization for reports and oracle files.

Floats are rendered with 17 significant digits (lossless for IEEE doubles),
NaN and infinities become null, and mappings keep their insertion order, so
identical inputs serialize to identical bytes. Golden-file comparisons rely
on this.
"""
from __future__ import annotations

import json
import math
from typing import Any, Mapping

import numpy as np

SCHEMA_VERSION = "1"


def _render(obj: Any, pieces: list[str], indent: str, level: int) -> None:
    pad = indent * level
    pad_in = indent * (level + 1)
    if obj is None:
        pieces.append("null")
    elif isinstance(obj, bool) or isinstance(obj, np.bool_):
        pieces.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        pieces.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        value = float(obj)
        pieces.append(format(value, ".17g") if math.isfinite(value) else "null")
    elif isinstance(obj, str):
        pieces.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, Mapping):
        if not obj:
            pieces.append("{}")
            return
        pieces.append("{\n")
        for i, (key, value) in enumerate(obj.items()):
            pieces.append(pad_in + json.dumps(str(key), ensure_ascii=False) + ": ")
            _render(value, pieces, indent, level + 1)
            pieces.append(",\n" if i < len(obj) - 1 else "\n")
        pieces.append(pad + "}")
    elif isinstance(obj, np.ndarray):
        _render(obj.tolist(), pieces, indent, level)
    elif isinstance(obj, (list, tuple)):
        if not obj:
            pieces.append("[]")
            return
        pieces.append("[\n")
        for i, value in enumerate(obj):
            pieces.append(pad_in)
            _render(value, pieces, indent, level + 1)
            pieces.append(",\n" if i < len(obj) - 1 else "\n")
        pieces.append(pad + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} to report JSON")


def to_json(obj: Any) -> str:
    pieces: list[str] = []
    _render(obj, pieces, "  ", 0)
    pieces.append("\n")
    return "".join(pieces)


def write_json(path, obj: Any) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(to_json(obj))


def format_float(value: float) -> str:
    """17-significant-digit rendering used in plot CSVs."""
    return format(float(value), ".17g")
