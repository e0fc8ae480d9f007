"""Structured output: CSV with ``# key=value`` provenance lines, and JSON.

Floats are written with 17 significant digits (``%.17g``), which round-trips
every double exactly; non-finite values become ``nan``/``inf`` in CSV and
``null`` in JSON. Files always use LF line endings and ``.`` as the decimal
separator, independent of locale.
"""

from __future__ import annotations

import json
import math
import sys
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

__all__ = ["format_value", "write_csv", "to_json", "write_json", "read_csv_table"]


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _open(path):
    if path is None or str(path) == "-":
        return sys.stdout, False
    return open(path, "w", newline="\n", encoding="utf-8"), True


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], meta: Optional[Mapping] = None) -> None:
    """Write ``# key=value`` lines for ``meta`` (in the given order), a header row, then ``rows``."""
    fh, close = _open(path)
    try:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}={format_value(v)}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} fields, header has {len(columns)}")
            fh.write(",".join(format_value(v) for v in row) + "\n")
    finally:
        if close:
            fh.close()


def _json_token(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return format(v, ".17g") if math.isfinite(v) else "null"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, np.ndarray):
        return _json_token(v.tolist())
    if isinstance(v, Mapping):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json_token(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_json_token(x) for x in v) + "]"
    return json.dumps(str(v))


def to_json(obj) -> str:
    """Single JSON object text with 17-significant-digit floats."""
    return _json_token(obj) + "\n"


def write_json(path, obj) -> None:
    fh, close = _open(path)
    try:
        fh.write(to_json(obj))
    finally:
        if close:
            fh.close()


def read_csv_table(path):
    """Read a file written by :func:`write_csv`: returns ``(meta, columns, rows)`` with rows as strings."""
    meta, columns, rows = {}, None, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
            elif columns is None:
                columns = line.split(",")
            elif line:
                rows.append(line.split(","))
    return meta, columns or [], rows
