"""CSV / JSON serialisation of trajectories, curve tables and link-sim runs.

Floats are written with 17 significant digits in CSV; JSON uses Python's
shortest round-trip repr. Non-finite values are the literal strings
``inf``, ``-inf`` and ``nan`` in both formats.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from sgmod.capacity import CurveTable
from sgmod.density import DeTrajectory
from sgmod.linksim import LinkSimResult


def fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.17g" % v


def parse_float(s: str) -> float:
    return float(s)  # accepts "inf", "-inf", "nan"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else fmt(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def write_json(obj, path: Path) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=1) + "\n")


# -- density evolution -----------------------------------------------------

TRAJECTORY_COLUMNS = ("iteration", "t", "x", "z")


def write_trajectory_csv(traj: DeTrajectory, path: Path, stride: int = 1) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(TRAJECTORY_COLUMNS)
        for prof in traj.profiles:
            x = prof.x if prof.x is not None else np.full(prof.z.shape, math.nan)
            for t, xv, zv in zip(prof.t[::stride], x[::stride], prof.z[::stride]):
                out.writerow((prof.iteration, fmt(t), fmt(xv), fmt(zv)))


def read_trajectory_csv(path: Path) -> dict[int, dict[str, np.ndarray]]:
    """Profiles keyed by iteration, each with arrays ``t``, ``x``, ``z``."""
    rows: dict[int, dict[str, list]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRAJECTORY_COLUMNS:
            raise ValueError(f"unexpected header {reader.fieldnames!r}")
        for r in reader:
            d = rows.setdefault(int(r["iteration"]), {"t": [], "x": [], "z": []})
            for key in ("t", "x", "z"):
                d[key].append(parse_float(r[key]))
    return {i: {k: np.array(v) for k, v in d.items()} for i, d in rows.items()}


def trajectory_summary(traj: DeTrajectory, model: str | None = None) -> dict:
    p = traj.params
    return {
        "params": {"alpha": p.alpha, "sigma2": p.sigma2, "w": p.w, "theta": p.theta},
        "mode": traj.mode.value,
        "model": model or traj.final.model.value,
        "iterations": traj.iterations,
        "converged": traj.converged,
        "stalled": traj.stalled,
        "front": traj.front,
        "speed": traj.speed,
    }


def trajectory_json(traj: DeTrajectory, stride: int = 1) -> dict:
    out = trajectory_summary(traj)
    out["profiles"] = [
        {"iteration": p.iteration, "t": p.t[::stride], "z": p.z[::stride],
         "x": None if p.x is None else p.x[::stride]}
        for p in traj.profiles
    ]
    return out


# -- curves ----------------------------------------------------------------

CURVE_COLUMNS = ("receiver", "alpha", "s", "sigma2", "ebn0_db", "spectral_efficiency")


def write_curve_csv(table: CurveTable, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(CURVE_COLUMNS)
        for row in table.sorted_for_export():
            d = row.as_row()
            out.writerow([d["receiver"]] + [fmt(d[c]) for c in CURVE_COLUMNS[1:]])


def read_curve_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CURVE_COLUMNS:
            raise ValueError(f"unexpected header {reader.fieldnames!r}")
        return [{"receiver": r["receiver"],
                 **{c: parse_float(r[c]) for c in CURVE_COLUMNS[1:]}} for r in reader]


def curve_json(table: CurveTable) -> dict:
    return {"columns": list(CURVE_COLUMNS),
            "rows": [r.as_row() for r in table.sorted_for_export()]}


# -- link simulation -------------------------------------------------------

DE_COMPARISON_COLUMNS = ("iteration", "slot", "x_hat", "x_de", "rel_err")


def linksim_json(result: LinkSimResult, comparison: dict | None = None) -> dict:
    out = result.to_dict()
    if comparison is not None:
        out["de_comparison"] = {k: comparison[k] for k in ("sim", "de", "rel_err")}
    return out


def write_de_comparison_csv(comparison: dict, path: Path) -> None:
    sim, de, rel = comparison["sim"], comparison["de"], comparison["rel_err"]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(DE_COMPARISON_COLUMNS)
        for i in range(sim.shape[0]):
            for t in range(sim.shape[1]):
                out.writerow((i, t + 1, fmt(sim[i, t]), fmt(de[i, t]), fmt(rel[i, t])))
