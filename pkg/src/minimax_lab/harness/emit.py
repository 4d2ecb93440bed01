"""CSV and JSON writers with a deterministic byte layout.

CSV: a ``#`` comment block (config hash, seed, library version), one header
row, floats as 17 significant digits, LF line endings. JSON: sorted keys,
shortest round-trip float repr, non-finite floats written as null.
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .. import __version__


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    s = str(v)
    if any(c in s for c in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def meta_block(meta):
    meta = dict(meta or {})
    meta.setdefault("version", __version__)
    return "".join(f"# {k}: {meta[k]}\n" for k in sorted(meta))


def csv_text(table: Table, meta=None):
    lines = [meta_block(meta), ",".join(table.columns) + "\n"]
    for row in table.rows:
        lines.append(",".join(_cell(v) for v in row) + "\n")
    return "".join(lines)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Table):
        return {"columns": list(obj.columns), "rows": _jsonable(obj.rows)}
    return obj


def json_text(obj, meta=None):
    doc = _jsonable(obj)
    if meta is not None and isinstance(doc, dict):
        m = dict(meta)
        m.setdefault("version", __version__)
        doc = dict(doc, meta=_jsonable(m))
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def emit(results, fmt, path, meta=None):
    """Write ``results`` (a Table for csv, any JSON-able object for json) to ``path``."""
    if results is None:
        raise ValueError("results must not be None")
    if fmt == "csv":
        if not isinstance(results, Table):
            raise TypeError("csv output needs a Table")
        text = csv_text(results, meta)
    elif fmt == "json":
        text = json_text(results, meta)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def read_csv(path):
    """Parse a file written by :func:`emit` back into (meta, Table) with floats."""
    meta = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        k, _, v = lines[i][2:].partition(": ")
        meta[k] = v
        i += 1
    cols = lines[i].split(",")
    rows = []
    for line in lines[i + 1:]:
        if line == "":
            continue
        rows.append([_parse(c) for c in line.split(",")])
    return meta, Table(cols, rows)


def _parse(c):
    if c == "":
        return None
    try:
        return int(c)
    except ValueError:
        pass
    try:
        return float(c)
    except ValueError:
        return c
