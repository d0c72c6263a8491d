"""Shared serialization helpers: 17-significant-digit floats, atomic writes."""

from __future__ import annotations

import json
import math
import os
import tempfile


def fmt17(x) -> str:
    """Format a float with 17 significant digits (round-trips float64 exactly)."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _round17(obj):
    """Recursively rewrite floats as 17-digit reparsed values for json.dumps."""
    if isinstance(obj, float):
        if math.isfinite(obj):
            return float(fmt17(obj))
        return obj  # json.dumps renders Infinity/-Infinity/NaN literals
    if isinstance(obj, dict):
        return {k: _round17(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round17(v) for v in obj]
    return obj


def json_dumps(obj, indent: int | None = 2) -> str:
    """Deterministic JSON: sorted keys, 17-significant-digit floats."""
    return json.dumps(_round17(obj), indent=indent, sort_keys=True, allow_nan=True)


def atomic_write_text(path: str, text: str) -> None:
    """Write text to path via a temp file + rename so readers never see a torn file."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Binary counterpart of atomic_write_text."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
