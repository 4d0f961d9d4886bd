"""Exception hierarchy.

Argument/validation problems derive from :class:`ArgumentError` (a
``ValueError``); failures of a numerical method derive from
:class:`NumericError`. The command line maps the first family to exit
code 2 and the second to exit code 3.
"""


class EscapeLabError(Exception):
    """Base class for all package errors."""


class ArgumentError(EscapeLabError, ValueError):
    """Invalid argument, shape or parameter."""


class CatalogError(ArgumentError):
    """Unknown name in a catalog (landscapes, schedules, experiments)."""


class ConfigError(ArgumentError):
    """Malformed or inconsistent experiment configuration."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class HypothesisViolationError(ArgumentError):
    """A precondition of a closed-form result does not hold."""


class NumericError(EscapeLabError, RuntimeError):
    """A numerical method failed."""


class DivergenceError(NumericError):
    """A simulated path left the guard region or became non-finite."""

    def __init__(self, message, step=None, path_index=None):
        self.step = step
        self.path_index = path_index
        super().__init__(message)


class StepSizeError(NumericError):
    """Requested time step violates the scheme's stability bound."""

    def __init__(self, message, dt_max=None):
        self.dt_max = dt_max
        super().__init__(message)


class SchemeError(NumericError):
    """A discretization produced an inadmissible state (e.g. negative density)."""


class DomainError(NumericError):
    """Grid or ball does not cover what the computation needs."""


class ExpOverflowError(NumericError, OverflowError):
    """Result too large for float64; the log-domain value is attached."""

    def __init__(self, message, log_value):
        self.log_value = log_value
        super().__init__(message)


class SaddleSearchError(NumericError):
    """Saddle search did not converge or no barrier exists."""

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class SignatureError(NumericError):
    """A stationary point has the wrong Hessian signature."""


class ConvergenceError(NumericError):
    """An iterative eigen/linear solve did not converge."""


class InsufficientDataError(NumericError):
    """Too few samples for a fit."""


class DegenerateCaseError(NumericError):
    """Closed-form constants are singular at the given parameters."""


class NoFiniteTimeError(NumericError):
    """A schedule never enters the required tolerance band."""
