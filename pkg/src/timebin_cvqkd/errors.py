"""Exception types shared across the package."""


class TimebinCvqkdError(Exception):
    """Base class for all package errors."""


class DomainError(TimebinCvqkdError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class OrderOverflowError(DomainError):
    """A polynomial order exceeds the configured maximum."""


class ConfigurationError(TimebinCvqkdError, ValueError):
    """A parameter combination is invalid for the requested computation."""


class NumericError(TimebinCvqkdError, RuntimeError):
    """A numerical routine failed to converge within its resource budget."""


class InconsistentStatisticsError(TimebinCvqkdError, RuntimeError):
    """Observed statistics admit no physical model (infeasible estimation)."""


class UndefinedRateError(TimebinCvqkdError, ZeroDivisionError):
    """A conditional rate is requested where the conditioning gain vanishes."""
