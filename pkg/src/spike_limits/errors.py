"""Exception hierarchy.

Every error carries the CLI exit code it maps to:
1 input error, 2 domain error, 3 insufficient data, 4 numerical failure.
"""

from __future__ import annotations


class SpikeLimitsError(Exception):
    exit_code = 1


class InputError(SpikeLimitsError):
    exit_code = 1


class DomainError(SpikeLimitsError, ValueError):
    exit_code = 2


class BelowPhaseTransition(DomainError):
    """A spike does not satisfy phi'(alpha) > 0 and is absorbed by the bulk."""

    def __init__(self, message: str, alpha: float | None = None, spike: int | None = None):
        super().__init__(message)
        self.alpha = alpha
        self.spike = spike


class SeparationError(DomainError):
    pass


class NotACorrelationModel(DomainError):
    pass


class MultiplicityError(DomainError):
    pass


class ScopeError(DomainError):
    pass


class ValidationFailed(DomainError):
    def __init__(self, report):
        failed = ", ".join(report.failures()) or "unknown"
        super().__init__(f"model validation failed: {failed}")
        self.report = report


class InsufficientData(SpikeLimitsError):
    exit_code = 3


class NumericalError(SpikeLimitsError, ArithmeticError):
    exit_code = 4


class SolverError(NumericalError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class DegenerateVariance(NumericalError):
    pass
