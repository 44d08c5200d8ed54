"""Atomic, deterministic writers for CSV and JSON artifacts."""

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(value):
    return format(float(value), ".17g")


def write_csv(path, header, columns, config_hash):
    """Header row after a '# config_hash=' comment line; floats with 17 significant digits."""
    cols = [np.asarray(c).ravel() for c in columns]
    lines = [f"# config_hash={config_hash}", ",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_field_csv(path, times, x, named_slices, config_hash):
    """Long format t,x,<names>: one row per (time, node)."""
    times = np.asarray(times)
    x = np.asarray(x)
    tt = np.repeat(times, len(x))
    xx = np.tile(x, len(times))
    header = ["t", "x"] + list(named_slices)
    cols = [tt, xx] + [np.asarray(v).reshape(-1) for v in named_slices.values()]
    write_csv(path, header, cols, config_hash)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, payload, config_hash):
    body = dict(_jsonable(payload))
    body["config_hash"] = config_hash
    _atomic_write(path, json.dumps(body, indent=2, sort_keys=True) + "\n")


def read_table(path):
    """Columns of a CSV with one header row; '#' comment lines are skipped."""
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    header = [h.strip() for h in lines[0].split(",")]
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    return {name: data[:, k] for k, name in enumerate(header)}


def read_field_csv(path):
    """Read a long-format t,x,value CSV back into (times, x, slices)."""
    table = read_table(path)
    names = [n for n in table if n not in ("t", "x")]
    times = np.unique(table["t"])
    xs = np.unique(table["x"])
    values = table[names[0]].reshape(len(times), len(xs))
    return times, xs, values
