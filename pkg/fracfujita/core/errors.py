"""
errors.py

Exception hierarchy shared by the numerical core and the CLI.

Every class also derives from the matching builtin, so callers that only know
about ``ValueError`` / ``RuntimeError`` keep working.
"""

import math


class FracError(Exception):
    """Base class for all library errors."""


class DomainError(FracError, ValueError):
    """A parameter or argument lies outside the admissible range."""


class UnsupportedConfigurationError(DomainError):
    """The requested evaluation has no implemented method (never a silent wrong value)."""


class QuadratureError(FracError, RuntimeError):
    """Profile quadrature did not reach the requested stability."""

    def __init__(self, message: str, worst_z: float, rel_change: float):
        super().__init__(f"{message} (worst z={worst_z:.6g}, relative change={rel_change:.3e})")
        self.worst_z = worst_z
        self.rel_change = rel_change


class TruncationError(FracError, RuntimeError):
    """Too much kernel mass leaves the truncated spatial domain."""


class NoContractionError(FracError, RuntimeError):
    """Picard iterates stopped contracting (data outside the small-data regime)."""

    def __init__(self, message: str, iterations: int):
        super().__init__(message)
        self.iterations = iterations


class EnvelopeError(FracError, RuntimeError):
    """A kernel bound ratio is not finite inside the regime where the bound is asserted."""

    def __init__(self, message: str, t: float = float("nan"), x: float = float("nan")):
        located = not (math.isnan(t) or math.isnan(x))
        super().__init__(f"{message} at t={t:.6g}, x={x:.6g}" if located else message)
        self.t = t
        self.x = x


class EigenSolveError(FracError, RuntimeError):
    """Dense eigen-decomposition of the Dirichlet operator failed."""


class ConfigError(FracError, ValueError):
    """Experiment configuration violates the schema."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
