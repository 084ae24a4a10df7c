"""Time integration of vortex blobs.

Blobs are advected by the flow's velocity with classical RK4. The harmonic
coefficients are recomputed at every stage, so the prescribed circulations
hold throughout. If a stage position lands inside an obstacle the step is
split in two and retried, at most six times.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import CollisionError, ValidationError
from .field import FreePlane, VortexBlobs

FloatArray = NDArray[np.float64]

MAX_HALVINGS = 6


@dataclass(frozen=True)
class SimulationState:
    """Blob configuration with its clock.

    Attributes
    ----------
    blobs : VortexBlobs
    dt : float
        Nominal step size.
    step_index : int
    """

    blobs: VortexBlobs
    dt: float
    step_index: int = 0

    @property
    def time(self) -> float:
        return self.blobs.time


@dataclass
class Trajectory:
    """Recorded evolution of a run.

    Attributes
    ----------
    flow : FlowSolver or FreePlane
    snapshots : list of VortexBlobs
    records : list of DiagnosticsRecord
    halvings : int
        Total number of step splits triggered by boundary contact.
    """

    flow: object
    snapshots: list = field(default_factory=list)
    records: list = field(default_factory=list)
    halvings: int = 0

    @property
    def times(self) -> FloatArray:
        return np.array([s.time for s in self.snapshots])

    @property
    def final(self) -> VortexBlobs:
        return self.snapshots[-1]

    def velocity_at(self, blobs: VortexBlobs, points) -> FloatArray:
        if isinstance(self.flow, FreePlane):
            return self.flow.velocity(blobs, points)
        return self.flow.decompose(blobs).velocity(points, check=False)

    def rows(self) -> list:
        """Rows ``t, blob_id, x, y, gamma`` for every snapshot."""
        out = []
        for s in self.snapshots:
            for j in range(len(s)):
                out.append((s.time, j, s.positions[j, 0], s.positions[j, 1], s.strengths[j]))
        return out


class _Penetration(Exception):
    def __init__(self, blob):
        self.blob = blob


def _check(flow, pos):
    if flow.k == 0:
        return
    ok = flow.outside(pos)
    if not ok.all():
        raise _Penetration(int(np.flatnonzero(~ok)[0]))


def _rk4(flow, blobs: VortexBlobs, dt: float) -> VortexBlobs:
    x0 = blobs.positions
    k1 = flow.blob_velocity(blobs)
    x = x0 + 0.5 * dt * k1
    _check(flow, x)
    k2 = flow.blob_velocity(blobs.moved(x))
    x = x0 + 0.5 * dt * k2
    _check(flow, x)
    k3 = flow.blob_velocity(blobs.moved(x))
    x = x0 + dt * k3
    _check(flow, x)
    k4 = flow.blob_velocity(blobs.moved(x))
    x = x0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    _check(flow, x)
    return blobs.moved(x, blobs.time + dt)


def _advance(flow, blobs, dt, depth, counter):
    try:
        return _rk4(flow, blobs, dt)
    except _Penetration as exc:
        if depth >= MAX_HALVINGS:
            raise CollisionError(f"blob-boundary collision: blob {exc.blob} enters an obstacle at "
                                 f"t={blobs.time:.6g}", field="dt", blob_id=exc.blob,
                                 time=float(blobs.time)) from None
        counter[0] += 1
        mid = _advance(flow, blobs, 0.5 * dt, depth + 1, counter)
        return _advance(flow, mid, 0.5 * dt, depth + 1, counter)


def step(state: SimulationState, flow, stats: dict | None = None) -> SimulationState:
    """Advance one RK4 step of size ``state.dt``.

    Raises
    ------
    CollisionError
        If a blob still enters an obstacle after six step halvings.
    """
    if not state.dt > 0:
        raise ValidationError("dt must be positive", field="dt")
    counter = [0]
    blobs = _advance(flow, state.blobs, state.dt, 0, counter)
    if stats is not None:
        stats["halvings"] = stats.get("halvings", 0) + counter[0]
    return SimulationState(blobs, state.dt, state.step_index + 1)


def simulate(flow, blobs: VortexBlobs, dt: float, t_final: float, snapshot_every: int = 1,
             diagnostics: Callable | None = None, diagnostics_every: int = 10,
             progress: Callable | None = None) -> Trajectory:
    """Run RK4 from ``blobs`` to ``t_final``.

    Parameters
    ----------
    flow : FlowSolver or FreePlane
    blobs : VortexBlobs
        Initial configuration; must lie outside all obstacles.
    dt, t_final : float
        The number of steps is ``round(t_final / dt)``.
    snapshot_every : int
        Keep every this many steps (the first and last are always kept).
    diagnostics : callable, optional
        ``diagnostics(blobs) -> DiagnosticsRecord``.
    """
    if not dt > 0:
        raise ValidationError("dt must be positive", field="dt")
    if not t_final >= 0:
        raise ValidationError("t_final must be non-negative", field="t_final")
    nsteps = int(round(t_final / dt))
    if abs(nsteps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValidationError("t_final must be a whole number of steps", field="t_final")
    if flow.k and not flow.outside(blobs.positions).all():
        raise ValidationError("initial blob inside an obstacle", field="blobs")
    if flow.k and len(blobs):
        # a blob on the curve itself has no image and no finite velocity
        gap = min(np.abs(m.evaluate(blobs.z)).min() for m in flow.maps)
        if not gap > 1.0 + 1e-12:
            raise ValidationError("initial blob on an obstacle boundary", field="blobs")
    traj = Trajectory(flow)
    traj.snapshots.append(blobs)
    if diagnostics is not None:
        traj.records.append(diagnostics(blobs))
    state = SimulationState(blobs, dt, 0)
    t0 = blobs.time
    stats = {}
    for n in range(1, nsteps + 1):
        state = step(state, flow, stats)
        # keep the clock on the grid t0 + n dt
        state = SimulationState(state.blobs.moved(state.blobs.positions, t0 + n * dt), dt, n)
        if n % snapshot_every == 0 or n == nsteps:
            traj.snapshots.append(state.blobs)
        if diagnostics is not None and (n % diagnostics_every == 0 or n == nsteps):
            traj.records.append(diagnostics(state.blobs))
        if progress is not None:
            progress(n, nsteps)
    traj.halvings = stats.get("halvings", 0)
    return traj
