"""CSV/JSON helpers shared by the CLI and the experiment harness.

Floats are written with ``repr`` (shortest round-trip form), so reading a file
and writing it back reproduces it byte for byte.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_table(path, header, rows):
    """Write a header plus rows with '.' decimals and LF line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", newline="\n")
    return path


def _parse(cell):
    try:
        return int(cell) if cell.lstrip("-").isdigit() else float(cell)
    except ValueError:
        return cell


def read_table(path, numeric=True):
    """Read a CSV written by :func:`write_table`.

    With ``numeric=True`` the body must be all-float and an ``(m, p)`` array
    is returned; otherwise rows of parsed cells.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigurationError(f"{path} is empty") from None
        body = [row for row in reader if row]
    if not numeric:
        return header, [[_parse(c) for c in row] for row in body]
    try:
        arr = np.array([[float(c) for c in row] for row in body], dtype=float)
    except ValueError as exc:
        raise ConfigurationError(f"{path}: non-numeric cell ({exc})") from None
    return header, arr.reshape(len(body), len(header))


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n", newline="\n")
    return path
