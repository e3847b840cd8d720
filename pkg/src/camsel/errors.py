"""Exception types raised across the package."""

from __future__ import annotations


class CamselError(ValueError):
    """Base class for all library errors."""


class DegenerateProjection(CamselError):
    def __init__(self, message: str, joint: int | None = None):
        super().__init__(message)
        self.joint = joint


class IdenticalCenters(CamselError):
    pass


class DegenerateLine(CamselError):
    pass


class InsufficientViews(CamselError):
    pass


class NumericalDegeneracy(CamselError):
    pass


class NoValidJoints(CamselError):
    pass


class HistoryTooShort(CamselError):
    pass


class SingularNormalEquations(CamselError):
    pass


class DimensionMismatch(CamselError):
    pass


class TooManyCameras(CamselError):
    pass


class NoComparableJoints(CamselError):
    pass


class ConfigError(CamselError):
    """Malformed or inconsistent configuration; ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
