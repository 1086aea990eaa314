"""Exception types raised across the package.

The CLI maps these onto exit codes, so keep the hierarchy flat.
"""


class SBMError(Exception):
    """Base class for all package errors."""


class AssumptionViolation(SBMError):
    """A structural premise of a bound (class-size ordering etc.) does not hold."""


class EnumerationInfeasible(SBMError):
    """The requested enumeration or permutation search exceeds the configured cap."""


class UndefinedOdds(SBMError):
    """Both hypotheses carry zero posterior mass."""


class OverlapError(SBMError):
    """Hypotheses passed to an odds computation are not disjoint."""
