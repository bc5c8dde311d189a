"""Exception types shared across the package.

The command line tool maps these onto exit codes: ``ValidationError``
(and its subclasses) exit with 1, ``BudgetExceededError`` with 2.
"""


class L0SplineError(Exception):
    """Base class for all package errors."""


class ValidationError(L0SplineError, ValueError):
    """Invalid parameters, knots, or input data."""


class KnotGapError(ValidationError):
    """A pair of consecutive knots is neither equal nor at least d+1 apart."""


class KnotOrderError(ValidationError):
    """Knots are not non-decreasing."""


class KnotEndpointError(ValidationError):
    """Knot vector does not start at 0 or end at n."""


class SeriesFormatError(ValidationError):
    """Malformed input series file."""


class DegenerateSystemError(L0SplineError, RuntimeError):
    """A least squares system that should be full rank is numerically rank
    deficient."""


class NonConvergenceError(L0SplineError, RuntimeError):
    """An iterative solver hit its iteration cap before reaching its
    termination criterion."""


class BudgetExceededError(L0SplineError, RuntimeError):
    """An enumeration would exceed the configured work budget."""
