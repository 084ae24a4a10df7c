"""Refinement studies: a quantity tracked across a sequence of levels.

Every study returns a dict with ``study``, ``quantity``, ``levels`` and
``values`` plus study-specific extras. The command line writes it as JSON,
a CSV table and a figure.
"""

from __future__ import annotations

import numpy as np

from .conformal import DiskMap, EllipseMap, caratheodory_check, fit_to_tolerance
from .diagnostics import BumpTestField, momentum_residual, poincare_estimate
from .errors import ValidationError
from .field import FlowSolver, FreePlane, VortexBlobs
from .geometry import (JordanCurve, SingularObstacle, approximation_sequence, build_domain,
                       capacity_estimate, hausdorff_distance)
from .transport import simulate


def _circle_points(radius=2.0, count=400, center=0j):
    return center + radius * np.exp(2j * np.pi * np.arange(count) / count)


def _monotone_decreasing(vals) -> bool:
    return bool(np.all(np.diff(vals) < 0))


def caratheodory_circle(n_list=(4, 8, 16, 32), radius=1.0, probe=2.0, samples=256, tol=1e-8):
    """Maps of circles of radius ``r + 1/n`` against the map of the radius-``r`` circle."""
    maps = [fit_to_tolerance(JordanCurve.circle((0, 0), radius + 1.0 / n, samples, n=n), tol)
            for n in n_list]
    rows = caratheodory_check(maps, DiskMap(0j, radius), _circle_points(probe))
    vals = [r["dev"] for r in rows]
    return {"quantity": f"sup |T_n - T| on |x| = {probe:g}", "levels": list(n_list), "values": vals,
            "derivative_values": [r["dev_derivative"] for r in rows],
            "monotone": _monotone_decreasing(vals)}


def caratheodory_ellipse(n_list=(4, 8, 16, 32), a=1.0, probe=2.0, samples=256, tol=1e-8):
    """Maps of ellipses with semi-axes ``a`` and ``1/n`` against the segment ``[-a, a]``."""
    maps = [fit_to_tolerance(JordanCurve.ellipse((0, 0), a, 1.0 / n, samples=samples, n=n), tol)
            for n in n_list]
    rows = caratheodory_check(maps, EllipseMap(a, 0.0), _circle_points(probe))
    vals = [r["dev"] for r in rows]
    return {"quantity": f"sup |T_n - T_segment| on |x| = {probe:g}", "levels": list(n_list), "values": vals,
            "derivative_values": [r["dev_derivative"] for r in rows],
            "map_residuals": [m.residual for m in maps],
            "monotone": _monotone_decreasing(vals)}


def _two_disk_flow():
    curves = [JordanCurve.circle((-1.5, 0), 0.5, 256, owner=1), JordanCurve.circle((1.5, 0), 0.5, 256, owner=2)]
    maps = [fit_to_tolerance(c, 1e-12) for c in curves]
    flow = FlowSolver(maps, curves, [0.5, 0.0])
    blobs = VortexBlobs([[0.0, 0.4], [0.0, -0.4], [0.0, 1.2]], [1.0, 1.0, -0.5], 0.05)
    return flow, blobs


def _orbit_flow():
    curve = JordanCurve.circle((0, 0), 1.0, 256, owner=1)
    flow = FlowSolver([fit_to_tolerance(curve, 1e-12)], [curve], [0.0])
    return flow, VortexBlobs([[2.0, 0.0]], [2 * np.pi], 0.05)


def dt_order(dts=(2.0, 1.0, 0.5, 0.25), t_final=8.0, scenario="orbit", ref_factor=8):
    """Endpoint error of RK4 as the step halves.

    ``scenario="orbit"``: one blob of circulation ``2 pi`` at ``(2, 0)`` outside
    the unit disk, compared with its exact orbit ``2 exp(-i t / 12)``.
    ``scenario="two-disk"``: three blobs between two disks, compared with a run
    at ``ref_factor`` times the smallest step.
    """
    if scenario == "orbit":
        flow, blobs = _orbit_flow()
        ex = 2.0 * np.exp(-1j * t_final / 12.0)
        ref = np.array([[ex.real, ex.imag]])
    elif scenario == "two-disk":
        flow, blobs = _two_disk_flow()
        ref = simulate(flow, blobs, min(dts) / ref_factor, t_final, snapshot_every=10 ** 9).final.positions
    else:
        raise ValidationError(f"unknown dt-order scenario {scenario!r}; use 'orbit' or 'two-disk'",
                              field="scenario")
    errs = [float(np.abs(simulate(flow, blobs, dt, t_final, snapshot_every=10 ** 9).final.positions - ref).max())
            for dt in dts]
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    return {"quantity": "max endpoint error", "levels": list(dts), "values": errs, "ratios": ratios,
            "scenario": scenario}


def capacity_point(radii=(0.1, 0.01, 0.001), hs=(0.02, 0.01, 0.005), R=1.0):
    """Capacity of shrinking disks, the grid refined alongside."""
    if len(radii) != len(hs):
        raise ValidationError("radii and hs must have equal length", field="hs")
    vals = [capacity_estimate(SingularObstacle.disk((0, 0), r), R, h) for r, h in zip(radii, hs)]
    return {"quantity": "discrete H1 capacity", "levels": list(radii), "grid": list(hs), "values": vals,
            "monotone": _monotone_decreasing(vals)}


def capacity_segment(hs=(0.04, 0.02, 0.01), half_length=0.5, R=1.0):
    """Capacity of a segment under grid refinement; stays bounded below."""
    seg = SingularObstacle.segment((-half_length, 0), (half_length, 0))
    vals = [capacity_estimate(seg, R, h) for h in hs]
    return {"quantity": "discrete H1 capacity", "levels": list(hs), "values": vals, "floor": min(vals)}


def poincare_segment(n_list=(8, 16, 32), rho=2.0, h=0.02, half_length=1.0):
    """Poincare constants around segment approximants."""
    seg = SingularObstacle.segment((-half_length, 0), (half_length, 0))
    vals = [poincare_estimate(approximation_sequence(seg, n), rho, h) for n in n_list]
    med = float(np.median(vals))
    return {"quantity": "discrete Poincare constant", "levels": list(n_list), "values": vals, "median": med,
            "max_ratio_to_median": float(max(max(v / med, med / v) for v in vals))}


def n_refinement(n_list=(8, 16, 32), dt=0.02, t_final=1.0, map_tolerance=1e-6):
    """Blob endpoints around segment approximants at increasing ``n``.

    Value ``i`` is the max endpoint distance between runs at ``n_i`` and ``n_{i+1}``.
    """
    seg = SingularObstacle.segment((-1.0, 0.0), (1.0, 0.0))
    blobs = VortexBlobs([[0.0, 0.8], [0.6, -0.9]], [1.0, -0.5], 0.05)
    ends = []
    for n in n_list:
        dom = build_domain([seg], n)
        maps = [fit_to_tolerance(c, map_tolerance, 64, 512) for c in dom.curves]
        flow = FlowSolver(maps, dom.curves, [0.5])
        ends.append(simulate(flow, blobs, dt, t_final, snapshot_every=10 ** 9).final.positions)
    dists = [float(np.abs(ends[i + 1] - ends[i]).max()) for i in range(len(ends) - 1)]
    return {"quantity": "max endpoint distance between n and next n", "levels": list(n_list[:-1]),
            "values": dists, "monotone": _monotone_decreasing(dists)}


def momentum_order(dts=(0.1, 0.05, 0.025, 0.0125), t_final=1.0, grid_ratio=0.4, center=(0.5, 1.4), radius=0.6):
    """Weak momentum residual of a translating pair, step and grid refined together.

    The test field sits beside the pair, where the flow is irrotational, so the
    exact residual is zero and the values measure discretisation error only.
    The spatial cell is ``grid_ratio * dt``.
    """
    blobs = VortexBlobs([[0.0, 0.5], [0.0, -0.5]], [2 * np.pi, -2 * np.pi], 0.05)
    phi = BumpTestField(center, radius, t_final)
    vals = []
    for dt in dts:
        traj = simulate(FreePlane(), blobs, dt, t_final, snapshot_every=1)
        vals.append(momentum_residual(traj, phi, grid_ratio * dt))
    return {"quantity": "weak momentum residual", "levels": list(dts), "values": vals,
            "grid": [grid_ratio * dt for dt in dts],
            "ratios": [vals[i] / vals[i + 1] for i in range(len(vals) - 1)]}


def hausdorff_koch(n_list=(4, 8, 16, 32), level=3):
    """Hausdorff distance from a Koch snowflake to its approximants."""
    ob = SingularObstacle.koch(level)
    vals = [hausdorff_distance(approximation_sequence(ob, n, 1024).points, ob.samples) for n in n_list]
    return {"quantity": "Hausdorff distance to the obstacle", "levels": list(n_list), "values": vals,
            "reference": [1.0 / n for n in n_list]}


STUDIES = {
    "caratheodory-circle": caratheodory_circle,
    "caratheodory-ellipse": caratheodory_ellipse,
    "dt-order": dt_order,
    "capacity-point": capacity_point,
    "capacity-segment": capacity_segment,
    "poincare-segment": poincare_segment,
    "n-refinement": n_refinement,
    "momentum-order": momentum_order,
    "hausdorff-koch": hausdorff_koch,
}


def run_study(name: str, params: dict | None = None) -> dict:
    """Run a named study with optional keyword overrides."""
    if name not in STUDIES:
        raise ValidationError(f"unknown study {name!r}; available: {', '.join(sorted(STUDIES))}",
                              field="study", available=sorted(STUDIES))
    params = params or {}
    try:
        out = STUDIES[name](**params)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for study {name!r}: {exc}", field="params") from None
    out = {"study": name, **out}
    out["params"] = params
    return out
