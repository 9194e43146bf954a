"""Exception hierarchy.

The CLI maps :class:`ConfigurationError` to exit code 2 and every
:class:`DepthkitNumericError` subclass to exit code 3.
"""


class DepthkitError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DepthkitError, ValueError):
    """Invalid parameters, unsupported families, violated preconditions."""


class DepthkitNumericError(DepthkitError, ArithmeticError):
    """A numerical procedure could not produce a valid answer."""


class DomainError(DepthkitNumericError):
    """Input outside the mathematical domain (e.g. log of a nonpositive value)."""


class DegenerateDataError(DepthkitNumericError):
    """Data too degenerate for the requested statistic (ties, zero spread)."""


class ConvergenceError(DepthkitNumericError):
    """An iterative search failed to converge."""
