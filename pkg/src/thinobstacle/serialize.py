"""Artifact serialisation: JSON headers + flat binary arrays, CSV tables.

Every array artifact is a pair <stem>.json / <stem>.bin: the header carries
the lattice parameters, dtype and shape; the binary file is the row-major
array.  Floating-point values inside JSON are formatted with 17 significant
digits so that reruns diff bytewise.
"""

import json
import os

import numpy as np

from .grid import Grid, GridSpec, build_grid

SCHEMA_VERSION = 1


def _write_json(fh, obj, indent):
    """Sorted-key JSON writer with literal %.17g floats."""
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            fh.write("{}")
            return
        fh.write("{\n")
        items = sorted(obj.items(), key=lambda kv: str(kv[0]))
        for i, (k, v) in enumerate(items):
            fh.write(pad + " " + json.dumps(str(k)) + ": ")
            _write_json(fh, v, indent + 1)
            fh.write(",\n" if i + 1 < len(items) else "\n")
        fh.write(pad + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            fh.write("[]")
            return
        fh.write("[\n")
        for i, v in enumerate(seq):
            fh.write(pad + " ")
            _write_json(fh, v, indent + 1)
            fh.write(",\n" if i + 1 < len(seq) else "\n")
        fh.write(pad + "]")
    elif isinstance(obj, (bool, np.bool_)):
        fh.write("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        fh.write(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        v = float(obj)
        if np.isnan(v):
            fh.write('"nan"')
        elif np.isinf(v):
            fh.write('"inf"' if v > 0 else '"-inf"')
        else:
            fh.write(f"{v:.17g}")
    elif obj is None:
        fh.write("null")
    else:
        fh.write(json.dumps(obj))


def dump_json(path, obj):
    with open(path, "w") as fh:
        _write_json(fh, obj, 0)
        fh.write("\n")


def load_json(path):
    def revive(x):
        if isinstance(x, dict):
            return {k: revive(v) for k, v in x.items()}
        if isinstance(x, list):
            return [revive(v) for v in x]
        if x == "nan":
            return np.nan
        if x == "inf":
            return np.inf
        if x == "-inf":
            return -np.inf
        return x

    with open(path) as fh:
        return revive(json.load(fh))


def _write_array(stem, arr):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    with open(stem + ".bin", "wb") as fh:
        fh.write(arr.tobytes())
    return {"dtype": "float64", "shape": list(arr.shape), "order": "C"}


def _read_array(stem, header):
    with open(stem + ".bin", "rb") as fh:
        raw = fh.read()
    arr = np.frombuffer(raw, dtype=header["dtype"]).copy()
    return arr.reshape(header["shape"])


def save_field(stem, field):
    """Solution field -> stem.json + stem.bin."""
    g = field.grid
    header = {
        "schema_version": SCHEMA_VERSION,
        "kind": "solution_field",
        "mode": field.mode,
        "grid": {"dim": g.dim, "h": g.h, "half": g.spec.half},
        "array": _write_array(stem, field.values),
    }
    dump_json(stem + ".json", header)


def load_field(stem):
    from .solver import SolutionField

    header = load_json(stem + ".json")
    if header.get("kind") != "solution_field":
        raise ValueError(f"{stem} is not a solution field artifact")
    gs = header["grid"]
    grid = build_grid(GridSpec(dim=int(gs["dim"]), h=float(gs["h"]),
                               half=bool(gs["half"])))
    values = _read_array(stem, header["array"])
    return SolutionField(grid=grid, values=values, mode=header["mode"])


def save_metric(stem, metric):
    g = metric.grid
    header = {
        "schema_version": SCHEMA_VERSION,
        "kind": "metric_field",
        "p": metric.p,
        "cstar": metric.cstar,
        "grid": {"dim": g.dim, "h": g.h, "half": g.spec.half},
        "array": _write_array(stem, metric.a),
    }
    dump_json(stem + ".json", header)


def load_metric(stem):
    from .coefficients import MetricField

    header = load_json(stem + ".json")
    if header.get("kind") != "metric_field":
        raise ValueError(f"{stem} is not a metric artifact")
    gs = header["grid"]
    grid = build_grid(GridSpec(dim=int(gs["dim"]), h=float(gs["h"]),
                               half=bool(gs["half"])))
    a = _read_array(stem, header["array"])
    return MetricField(grid=grid, a=a, p=float(header["p"]),
                       cstar=float(header["cstar"]))


def save_grid(stem, grid: Grid):
    """Grid nodes and masks: coordinates plus a per-node flag bitmask."""
    flags = (
        grid.active.astype(np.uint8)
        | (grid.interior.astype(np.uint8) << 1)
        | (grid.sphere.astype(np.uint8) << 2)
        | (grid.plane.astype(np.uint8) << 3)
    )
    packed = np.concatenate(
        [grid.coords.reshape(-1, grid.dim), flags.reshape(-1, 1).astype(np.float64)],
        axis=1,
    )
    header = {
        "schema_version": SCHEMA_VERSION,
        "kind": "grid",
        "grid": {"dim": grid.dim, "h": grid.h, "half": grid.spec.half},
        "columns": [f"x{i}" for i in range(grid.dim)] + ["flags"],
        "flag_bits": {"active": 0, "interior": 1, "sphere": 2, "plane": 3},
        "array": _write_array(stem, packed),
    }
    dump_json(stem + ".json", header)


def save_points_csv(path, points, header_cols):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    with open(path, "w") as fh:
        fh.write(",".join(header_cols) + "\n")
        for row in points:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def save_table_csv(path, columns):
    """columns: ordered dict-like of name -> 1D array."""
    names = list(columns)
    arrays = [np.asarray(columns[k], dtype=float) for k in names]
    n = len(arrays[0])
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(n):
            fh.write(",".join(f"{a[i]:.17g}" for a in arrays) + "\n")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
