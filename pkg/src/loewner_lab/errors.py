"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: domain and geometry problems exit
with 1, numerical accuracy problems with 2, malformed input with 64.
"""


class LoewnerLabError(Exception):
    """Base class for all package errors."""


class MalformedInputError(LoewnerLabError, ValueError):
    """Input data does not satisfy the structural contract of a type."""


class DomainError(LoewnerLabError, ValueError):
    """A parameter lies outside the mathematical domain of an operation."""


class GeometryError(LoewnerLabError):
    """A geometric precondition failed (collision, non-simple curve, ...)."""


class NonSimpleTraceError(GeometryError):
    """A trace or input curve self-intersects within tolerance."""


class ResolutionError(GeometryError):
    """Sample spacing is too coarse for a stable computation."""

    def __init__(self, message, suggested_resolution=None):
        super().__init__(message)
        self.suggested_resolution = suggested_resolution


class NumericalAccuracyError(LoewnerLabError):
    """A numerical procedure failed to reach its tolerance."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket
