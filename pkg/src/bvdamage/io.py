"""Reading and writing run artifacts.

CSV files use '.' decimals and 17 significant digits, so a write/read
cycle reproduces every float exactly; JSON is written with sorted keys.
Both are byte-identical for identical inputs.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .viscous_stepper import COLUMNS, Trajectory

INT_COLUMNS = {"k", "active_nodes", "newton_iters"}


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def read_csv(path) -> dict:
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [row for row in reader if row]
    cols = {}
    for j, name in enumerate(header):
        vals = [row[j] for row in data]
        if name in INT_COLUMNS:
            cols[name] = np.array([int(v) for v in vals], dtype=int)
        else:
            cols[name] = np.array([float(v) for v in vals], dtype=float)
    return cols


def trajectory_rows(traj: Trajectory, extra_columns=("newton_iters", "DzI_L2")):
    c = traj.table
    extra = [name for name in extra_columns if name in c]
    header = list(COLUMNS) + extra
    rows = []
    for k in range(len(traj)):
        row = [k, traj.times[k]]
        for name in COLUMNS[2:]:
            val = c[name][k]
            row.append(int(val) if name in INT_COLUMNS else float(val))
        for name in extra:
            row.append(int(c[name][k]) if name in INT_COLUMNS else float(c[name][k]))
        rows.append(row)
    return header, rows


def write_trajectory_csv(path, traj: Trajectory) -> None:
    header, rows = trajectory_rows(traj)
    write_csv(path, header, rows)


def read_trajectory_csv(path) -> dict:
    """Columns of a trajectory CSV; ``table`` keys follow :class:`Trajectory`."""
    cols = read_csv(path)
    missing = [c for c in COLUMNS if c not in cols]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    return cols


def ledger_totals_from_columns(cols: dict) -> dict:
    """Same totals as :meth:`Trajectory.ledger_totals`, from CSV columns."""
    dt = np.diff(cols["t"])
    diss = np.concatenate([[0.0], np.cumsum(dt * (cols["Reps"][1:] + cols["Rconj"][1:]))])
    return {"dissipation": float(diss[-1]), "energy_final": float(cols["I"][-1]),
            "energy_initial": float(cols["I"][0])}


def write_snapshot(path, x, z) -> None:
    write_csv(path, ["x", "z"], zip(x, z))


def read_snapshot(path) -> np.ndarray:
    return read_csv(path)["z"]


def write_path_csv(path, tpath) -> None:
    """Columns ``r``, then nodal ``theta`` values, then the cost of the segment starting at ``r``."""
    n = tpath.theta.shape[1]
    header = ["r"] + [f"theta_{i}" for i in range(n)] + ["f_value"]
    rows = []
    for j, r in enumerate(tpath.r):
        f = tpath.f_values[j] if j < len(tpath.f_values) else float("nan")
        rows.append([float(r)] + [float(v) for v in tpath.theta[j]] + [float(f)])
    write_csv(path, header, rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return repr(x)
        return x
    return obj


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
