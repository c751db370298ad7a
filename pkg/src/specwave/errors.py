"""Exception hierarchy shared by all modules.

Each class carries the CLI exit code it maps to, so the command layer
can translate failures without knowing where they came from.
"""
from __future__ import annotations


class SpecwaveError(Exception):
    """Base class for all library errors."""

    exit_code = 3


class ConfigurationError(SpecwaveError, ValueError):
    """Invalid user input: grid sizes, parameters, config keys."""

    exit_code = 2


class ShapeError(SpecwaveError, ValueError):
    exit_code = 2


class ConsistencyError(SpecwaveError, ValueError):
    """Inputs that are individually valid but disagree with each other."""

    exit_code = 2


class DomainError(SpecwaveError, ValueError):
    """A parameter lies outside the region where an operation is defined."""

    exit_code = 2


class ConvergenceError(SpecwaveError, RuntimeError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class NumericError(SpecwaveError, RuntimeError):
    pass


class NotFoundError(SpecwaveError, RuntimeError):
    """A root or crossing was not present in the requested bracket."""


class FitError(SpecwaveError, ValueError):
    pass


class ContourError(SpecwaveError, ValueError):
    """An eigenvalue sits too close to an integration contour."""


class DependencyError(SpecwaveError, RuntimeError):
    pass


class AssemblyError(SpecwaveError, RuntimeError):
    """A discretized operator failed one of its structural identities."""

    exit_code = 4


class PositivityError(SpecwaveError, ValueError):
    """The 2x2 potential block is not positive semidefinite at some node."""

    exit_code = 4


class DegeneracyError(SpecwaveError, RuntimeError):
    """A reduced operator stayed singular where it must be invertible."""

    exit_code = 4


class InvariantViolation(SpecwaveError, RuntimeError):
    exit_code = 4


class RefinementError(NumericError):
    """A sampled integrand is too coarse for the requested oscillation."""
