"""Trace files and run artifacts.

CSV cells are written with Python float repr (shortest round-trip form), so
reruns with identical configs produce byte-identical files; JSON is written
with sorted keys for the same reason.
"""

import csv
import json

import numpy as np

__all__ = [
    "format_cell", "write_csv", "read_csv", "write_json", "read_json",
    "trace_columns", "trajectory_columns",
]


def format_cell(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([format_cell(x) for x in row])


def read_csv(path):
    """Returns (header, dict column -> float array)."""
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        cols = [[] for _ in header]
        for row in r:
            for k, cell in enumerate(row):
                cols[k].append(float(cell))
    return header, {name: np.array(c) for name, c in zip(header, cols)}


def write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    with open(path) as f:
        return json.load(f)


def trace_columns(n_sites, engine):
    """Fixed run-level trace columns; trace for density-operator engines,
    cumulative jumps for trajectories."""
    cols = ["t", "S_center", "S_bond_avg"]
    cols += [f"sz_site_{i}" for i in range(n_sites)]
    if engine in ("mpdo", "itebd", "oracle"):
        cols.append("trace")
    if engine == "qt":
        cols.append("jumps_cum")
    return cols


def trajectory_columns(n_sites, tracked_bonds):
    cols = ["t", "S_center", "S_bond_avg"]
    cols += [f"S_bond_{b}" for b in tracked_bonds]
    cols += [f"sz_site_{i}" for i in range(n_sites)]
    cols.append("jumps_cum")
    return cols
