"""Exception types used across the toolkit.

All toolkit errors derive from :class:`DichokitError` so that callers can
distinguish them from built-in exceptions with a single except clause.
"""


class DichokitError(Exception):
    """Base class for all toolkit errors."""


class InvalidGrid(DichokitError):
    """Raised when time-grid parameters are inconsistent."""


class UnknownSystem(DichokitError):
    """Raised when a builtin system name is not in the catalog."""


class ParseError(DichokitError):
    """Raised on a malformed row or header in a sampled-data file."""


class DimensionError(DichokitError):
    """Raised when matrix dimensions are inconsistent or exceed the cap."""


class NonMonotoneTime(DichokitError):
    """Raised when sample times are not strictly increasing."""


class OutOfDomain(DichokitError):
    """Raised when a sampled system is queried outside its time range."""


class StepUnstable(DichokitError):
    """Raised when the propagated fundamental matrix exceeds the overflow guard."""


class SingularTransition(DichokitError):
    """Raised when a one-step transition matrix is numerically singular."""


class OffGrid(DichokitError):
    """Raised when a queried time is not a grid point."""


class GridTooCoarse(DichokitError):
    """Raised when a grid has too few points for finite differencing."""


class InvalidProjection(DichokitError):
    """Raised when a matrix fails the idempotency precondition."""


class NoDecay(DichokitError):
    """Raised when no positive decay rate can certify the dichotomy estimates."""


class NotDichotomic(DichokitError):
    """Raised when an operation requires a certified dichotomy and none exists."""


class NotBounded(DichokitError):
    """Raised when a solution fails the boundedness screen on its semi-axis."""


class TailDominates(DichokitError):
    """Raised when the truncation tail exceeds its budget everywhere (window too short)."""


class BoundViolated(DichokitError):
    """Raised when a solution exceeds the inverse-norm bound implied by its constants."""


class NotAdmissible(DichokitError):
    """Raised when a perturbation is too large for the inverse bound to apply."""


class TheoremViolationSuspected(DichokitError):
    """Raised when an admissible perturbation unexpectedly fails verification.

    This signals a numerical failure (window too short, grid too coarse),
    not a counterexample to the roughness guarantee.
    """


class NumericalOverflow(DichokitError):
    """Raised when kernel magnitudes exceed the range of double precision."""


class ConfigError(DichokitError):
    """Raised on an invalid or incomplete run configuration."""
