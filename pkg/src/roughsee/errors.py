"""Exception hierarchy shared by all modules.

The CLI maps ``ValidationError`` subclasses to exit code 2 and
``NumericFailure`` subclasses to exit code 3.
"""

from __future__ import annotations


class RoughSEEError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(RoughSEEError, ValueError):
    """Bad input: wrong domain, mismatched structure, violated parameter window."""


class DomainError(ValidationError):
    """An argument lies outside the domain of the operation."""


class StructuralError(ValidationError):
    """Objects that must share a grid or a dimension do not."""


class ContractError(ValidationError):
    """A precondition of an operation (exponent window, coupling) is violated."""


class ScheduleError(ValidationError):
    """No admissible step schedule exists for the given constants."""


class NumericFailure(RoughSEEError, ArithmeticError):
    """A computation ran but did not produce a trustworthy result."""


class ContractionFailure(NumericFailure):
    """Fixed-point iteration did not converge.

    Carries the empirical contraction ratio and, when raised by the global
    solver, the index of the failing interval.
    """

    def __init__(self, message: str, ratio: float = float("nan"), interval: int | None = None):
        super().__init__(message)
        self.ratio = ratio
        self.interval = interval
