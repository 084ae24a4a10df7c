"""Scenario files: parsing, validation and assembly of a runnable problem."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conformal import fit_to_tolerance
from .errors import ValidationError
from .field import FlowSolver, FreePlane, VortexBlobs
from .geometry import DomainApproximation, SingularObstacle, build_domain, make_cutoffs

SCENARIO_SCHEMA = "obstacleflow.scenario/1"
STUDY_SCHEMA = "obstacleflow.study/1"

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def _num(d: dict, key: str, default=None, positive=False, integer=False, allow_none=False):
    val = d.get(key, default)
    if val is None:
        if allow_none:
            return None
        raise ValidationError(f"field {key!r} is required", field=key)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ValidationError(f"field {key!r} must be a number", field=key)
    if not math.isfinite(val):
        raise ValidationError(f"field {key!r} must be finite", field=key)
    if integer:
        if int(val) != val:
            raise ValidationError(f"field {key!r} must be an integer", field=key)
        val = int(val)
    if positive and not val > 0:
        raise ValidationError(f"field {key!r} must be positive", field=key)
    return val


def patch_blobs(center, radius: float, count: int, circulation: float, profile: str = "uniform",
                core: float = 0.05) -> VortexBlobs:
    """Deterministic blob patch on a sunflower lattice.

    Blob ``i`` sits at radius ``R sqrt((i + 1/2)/N)`` and angle ``i`` times the
    golden angle. Strengths follow the vorticity profile (``uniform`` or
    ``parabolic`` ``1 - r^2/R^2``) and sum to ``circulation``.
    """
    if count < 1:
        raise ValidationError("patch count must be at least 1", field="count")
    if not radius > 0:
        raise ValidationError("patch radius must be positive", field="radius")
    i = np.arange(count)
    r = radius * np.sqrt((i + 0.5) / count)
    th = i * GOLDEN_ANGLE
    pos = np.column_stack([center[0] + r * np.cos(th), center[1] + r * np.sin(th)])
    if profile == "uniform":
        w = np.ones(count)
    elif profile == "parabolic":
        w = 1.0 - (r / radius) ** 2
    else:
        raise ValidationError(f"unknown patch profile {profile!r}", field="profile")
    return VortexBlobs(pos, circulation * w / w.sum(), core)


@dataclass
class Scenario:
    """Validated contents of a scenario file.

    Attributes mirror the JSON keys. ``n=None`` uses the obstacles' own
    smooth boundaries; ``obstacles=[]`` runs in the free plane.
    """

    obstacles: list
    gamma: np.ndarray
    blobs: VortexBlobs
    dt: float = 0.01
    t_final: float = 1.0
    n: int | None = 32
    core: float = 0.05
    cutoff_eps: float = 0.25
    map_degree: int = 64
    map_tolerance: float = 1e-8
    max_degree: int = 512
    harmonic_terms: int | None = None
    curve_samples: int = 256
    lq_h: float | None = None
    snapshot_every: int = 10
    diagnostics_every: int = 10
    tangency: bool = True
    field_grid: dict | None = None
    name: str = "scenario"
    notes: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.obstacles)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ValidationError("scenario must be a JSON object", field="scenario")
        schema = d.get("schema")
        if schema != SCENARIO_SCHEMA:
            raise ValidationError(f"unsupported schema {schema!r}, expected {SCENARIO_SCHEMA!r}", field="schema")
        obs_spec = d.get("obstacles", [])
        if not isinstance(obs_spec, list):
            raise ValidationError("obstacles must be a list", field="obstacles")
        obstacles = [SingularObstacle.from_dict(o, id=i + 1) for i, o in enumerate(obs_spec)]
        k = len(obstacles)
        gamma = d.get("gamma", [0.0] * k)
        if not isinstance(gamma, list) or len(gamma) != k:
            raise ValidationError(f"gamma must list one circulation per obstacle ({k})", field="gamma")
        if not all(isinstance(g, (int, float)) and not isinstance(g, bool) and math.isfinite(g) for g in gamma):
            raise ValidationError("gamma entries must be finite numbers", field="gamma")
        solver = d.get("solver", {})
        if not isinstance(solver, dict):
            raise ValidationError("solver must be an object", field="solver")
        core = _num(solver, "core", 0.05, positive=True)
        blobs = cls._parse_blobs(d.get("blobs"), core)
        n = d.get("approximation_index", 32)
        if n is not None:
            n = _num(d, "approximation_index", positive=True, integer=True)
        out = d.get("output", {})
        if not isinstance(out, dict):
            raise ValidationError("output must be an object", field="output")
        sc = cls(
            obstacles=obstacles,
            gamma=np.asarray(gamma, float),
            blobs=blobs,
            dt=_num(d, "dt", 0.01, positive=True),
            t_final=_num(d, "t_final", 1.0),
            n=n,
            core=core,
            cutoff_eps=_num(solver, "cutoff_eps", 0.25, positive=True),
            map_degree=_num(solver, "map_degree", 64, positive=True, integer=True),
            map_tolerance=_num(solver, "map_tolerance", 1e-8, positive=True),
            max_degree=_num(solver, "max_degree", 512, positive=True, integer=True),
            harmonic_terms=_num(solver, "harmonic_terms", None, positive=True, integer=True, allow_none=True),
            curve_samples=_num(solver, "curve_samples", 256, positive=True, integer=True),
            lq_h=_num(solver, "lq_h", None, positive=True, allow_none=True),
            snapshot_every=_num(out, "snapshot_every", 10, positive=True, integer=True),
            diagnostics_every=_num(out, "diagnostics_every", 10, positive=True, integer=True),
            tangency=bool(out.get("tangency", True)),
            field_grid=cls._parse_grid(out.get("field_grid")),
            name=str(d.get("name", "scenario")),
        )
        if sc.t_final < 0:
            raise ValidationError("t_final must be non-negative", field="t_final")
        steps = sc.t_final / sc.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValidationError("t_final must be a whole number of steps", field="t_final")
        if sc.curve_samples < 32:
            raise ValidationError("curve_samples must be at least 32", field="curve_samples")
        return sc

    @staticmethod
    def _parse_blobs(spec, core) -> VortexBlobs:
        if spec is None:
            raise ValidationError("blobs are required", field="blobs")
        if isinstance(spec, list):
            pos, gam = [], []
            for b in spec:
                if not isinstance(b, dict):
                    raise ValidationError("each blob must be an object", field="blobs")
                pos.append([_num(b, "x"), _num(b, "y")])
                gam.append(_num(b, "gamma"))
            return VortexBlobs(np.asarray(pos, float).reshape(-1, 2), np.asarray(gam, float), core)
        if isinstance(spec, dict) and "patch" in spec:
            p = spec["patch"]
            c = p.get("center", [0.0, 0.0])
            if not (isinstance(c, list) and len(c) == 2):
                raise ValidationError("patch center must be [x, y]", field="center")
            return patch_blobs(c, _num(p, "radius", positive=True), _num(p, "count", integer=True, positive=True),
                               _num(p, "circulation"), p.get("profile", "uniform"), core)
        raise ValidationError("blobs must be a list or a patch object", field="blobs")

    @staticmethod
    def _parse_grid(g):
        if g is None:
            return None
        if not isinstance(g, dict):
            raise ValidationError("field_grid must be an object", field="field_grid")
        b = g.get("bounds")
        if not (isinstance(b, list) and len(b) == 4 and b[0] < b[1] and b[2] < b[3]):
            raise ValidationError("field_grid bounds must be [xmin, xmax, ymin, ymax]", field="bounds")
        return {"bounds": [float(v) for v in b],
                "nx": _num(g, "nx", 81, positive=True, integer=True),
                "ny": _num(g, "ny", 81, positive=True, integer=True)}

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ValidationError(f"cannot read scenario: {exc.strerror}", field="scenario") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"scenario is not valid JSON: {exc.msg} (line {exc.lineno})",
                                  field="scenario") from None
        return cls.from_dict(data)

    def default_grid(self) -> dict:
        pts = [self.blobs.positions] + [o.samples for o in self.obstacles]
        allp = np.vstack([p for p in pts if len(p)])
        lo = allp.min(axis=0) - 1.0
        hi = allp.max(axis=0) + 1.0
        return {"bounds": [float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])], "nx": 81, "ny": 81}


@dataclass
class Problem:
    """Assembled geometry, maps and flow solver for a scenario."""

    scenario: Scenario
    domain: DomainApproximation | None
    maps: list
    flow: object
    cutoffs: list


def assemble(sc: Scenario) -> Problem:
    """Build curves, fit maps and set up the flow solver."""
    if sc.k == 0:
        return Problem(sc, None, [], FreePlane(), [])
    domain = build_domain(sc.obstacles, sc.n, sc.curve_samples)
    maps = []
    for cv in domain.curves:
        m = fit_to_tolerance(cv, sc.map_tolerance, sc.map_degree, sc.max_degree)
        if m.residual > sc.map_tolerance:
            sc.notes.append(f"map for obstacle {cv.owner} reached residual {m.residual:.2e} "
                            f"above tolerance {sc.map_tolerance:.1e}")
        maps.append(m)
    cutoffs = make_cutoffs(domain, sc.cutoff_eps)
    flow = FlowSolver(maps, domain.curves, sc.gamma, sc.harmonic_terms)
    return Problem(sc, domain, maps, flow, cutoffs)


def run(sc: Scenario, progress=None):
    """Assemble and simulate a scenario, recording diagnostics.

    Returns
    -------
    problem : Problem
    traj : Trajectory
    """
    from .diagnostics import TangencyQuadrature, record_diagnostics
    from .transport import simulate

    problem = assemble(sc)
    tq = None
    if sc.k and sc.tangency:
        tq = TangencyQuadrature(problem.maps, problem.domain.curves)

    def diag(blobs):
        return record_diagnostics(problem.flow, blobs, problem.cutoffs, tq, sc.lq_h)

    traj = simulate(problem.flow, sc.blobs, sc.dt, sc.t_final, sc.snapshot_every, diag,
                    sc.diagnostics_every, progress)
    return problem, traj
