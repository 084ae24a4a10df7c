"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` and, when it comes from
input validation, the name of the offending ``field``. The command line turns
these into JSON error records.
"""

from __future__ import annotations


class ObstacleFlowError(Exception):
    """Base class for all package errors."""

    code = "error"

    def __init__(self, message: str, field: str | None = None, **details):
        super().__init__(message)
        self.message = message
        self.field = field
        self.details = details

    def to_dict(self) -> dict:
        out = {"error": self.code, "message": self.message}
        if self.field is not None:
            out["field"] = self.field
        for key, val in self.details.items():
            out[key] = val
        return out


class ValidationError(ObstacleFlowError, ValueError):
    code = "validation"


class GeometryError(ObstacleFlowError, ValueError):
    code = "geometry"


class MapFitError(ObstacleFlowError, RuntimeError):
    code = "map-fit"


class InversionError(ObstacleFlowError, RuntimeError):
    code = "inversion"

    def __init__(self, message: str, last_iterate=None, **details):
        super().__init__(message, **details)
        self.last_iterate = last_iterate


class ResolutionError(ObstacleFlowError, ValueError):
    code = "resolution"


class CollisionError(ObstacleFlowError, RuntimeError):
    code = "collision"


class DomainError(ObstacleFlowError, ValueError):
    code = "domain"
