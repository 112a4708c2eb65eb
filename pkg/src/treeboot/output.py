"""Serialization of tables and run manifests.

Floats are written with 17 significant digits, which round-trips every
IEEE double.  JSON carries them as decimal strings so that no JSON parser
can reformat them.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from datetime import datetime, timezone

import numpy as np

from . import __version__


def fmt(x) -> str | int | bool | None:
    if x is None or isinstance(x, (bool, np.bool_)):
        return None if x is None else bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    return fmt(obj)


def to_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2) + "\n"


def to_csv(columns: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow(["" if v is None else fmt(v) for v in row])
    return buf.getvalue()


def render(fmt_name: str, columns: list[str], rows: list[list], extra: dict | None = None) -> str:
    """A table as CSV, or as a JSON array of row objects (wrapped when ``extra`` is given)."""
    if fmt_name == "csv":
        return to_csv(columns, rows)
    records = [dict(zip(columns, r)) for r in rows]
    if extra:
        return to_json({**extra, "rows": records})
    return to_json(records)


def checksum(payload: str) -> str:
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def manifest(command: str, params: dict, payload: str) -> dict:
    return {
        "command": command,
        "params": _jsonable(params),
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "sha256": checksum(payload),
    }
