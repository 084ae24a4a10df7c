"""Writers for run and study outputs: CSV tables, JSON reports and figures.

Floats are written with 17 significant digits so identical runs give
byte-identical files.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .diagnostics import diagnostics_header
from .field import field_grid


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_points(path, points) -> Path:
    """Point set as ``x,y`` rows."""
    return write_csv(path, ["x", "y"], np.asarray(points, float).reshape(-1, 2))


def read_points(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data.reshape(-1, 2)


def write_json(path, obj) -> Path:
    path = Path(path)

    def clean(o):
        if isinstance(o, dict):
            return {str(k): clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        if isinstance(o, np.ndarray):
            return clean(o.tolist())
        if isinstance(o, (np.floating, float)):
            f = float(o)
            return f if math.isfinite(f) else None
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, np.bool_):
            return bool(o)
        return o

    path.write_text(json.dumps(clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_run(problem, traj, outdir, figures: bool = False, save_maps: bool = False) -> list:
    """Write ``trajectory.csv``, ``diagnostics.csv`` and ``field_final.csv``.

    Optional extras: one map JSON and curve CSV per obstacle, and PNG figures.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    sc = problem.scenario
    files = [write_csv(out / "trajectory.csv", ["t", "blob_id", "x", "y", "gamma"], traj.rows())]
    files.append(write_csv(out / "diagnostics.csv", diagnostics_header(sc.k), [r.row() for r in traj.records]))
    grid = sc.field_grid or sc.default_grid()
    final = traj.final
    dec = problem.flow.decompose(final) if sc.k else problem.flow
    b = grid["bounds"]
    data = field_grid(dec, final, b[:2], b[2:], grid["nx"], grid["ny"])
    files.append(write_csv(out / "field_final.csv", ["x", "y", "psi", "u1", "u2"], data))
    if save_maps:
        for m, cv in zip(problem.maps, problem.domain.curves):
            files.append(write_json(out / f"map_{cv.owner}.json", m.to_dict()))
            files.append(write_points(out / f"curve_{cv.owner}.csv", cv.points))
    if figures:
        from .plotting import plot_diagnostics, plot_run

        files.append(plot_run(problem, traj, out / "trajectory.png"))
        if traj.records:
            files.append(plot_diagnostics(traj.records, out / "diagnostics.png"))
    return files


def write_study(report: dict, outdir, figures: bool = True) -> list:
    """Write ``<study>.json``, ``<study>.csv`` and, optionally, ``<study>.png``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    name = report["study"]
    files = [write_json(out / f"{name}.json", report)]
    rows = [(lvl, val) for lvl, val in zip(report["levels"], report["values"])]
    files.append(write_csv(out / f"{name}.csv", ["level", "value"], rows))
    if figures:
        from .plotting import plot_study

        files.append(plot_study(report, out / f"{name}.png"))
    return files
