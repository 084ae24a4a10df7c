"""Two-dimensional vortex-blob flow around obstacles, thin or thick.

Modules
-------
geometry
    Obstacles, smooth approximating curves, cutoffs, Hausdorff distance, capacity.
conformal
    Exterior maps onto the outside of the unit disk.
field
    Stream functions and velocities around several obstacles.
transport
    RK4 time stepping of the blobs.
diagnostics
    Conserved quantities, weak-form residuals, Poincare constants.
cli
    Scenario and study entry points.
"""

from .conformal import ExteriorMap, fit_exterior_map, fit_to_tolerance, map_inverse
from .field import FlowSolver, FreePlane, VortexBlobs
from .geometry import JordanCurve, SingularObstacle, approximation_sequence, build_domain
from .transport import simulate

__all__ = [
    "ExteriorMap",
    "FlowSolver",
    "FreePlane",
    "JordanCurve",
    "SingularObstacle",
    "VortexBlobs",
    "approximation_sequence",
    "build_domain",
    "fit_exterior_map",
    "fit_to_tolerance",
    "map_inverse",
    "simulate",
]

__version__ = "0.1.0"
