"""Exception hierarchy shared by every module of the package."""


class GeodrError(Exception):
    """Base class for all package errors."""


class DomainError(GeodrError, ValueError):
    """An argument lies outside the domain where a formula is valid."""


class ResourceLimitError(GeodrError):
    """A requested computation exceeds a configured size or step budget."""


class PrecisionInsufficientError(GeodrError):
    """The active arithmetic cannot resolve the requested tolerance."""


class RegimeMismatchError(GeodrError, ValueError):
    """A regime-specific quantity was requested for a trajectory in another regime."""


class BracketNotFoundError(GeodrError):
    """Both ends of a bisection interval fall in the same regime."""


class InsufficientLengthError(GeodrError, ValueError):
    """A trajectory is too short for the requested estimator."""


class IdentityViolation(GeodrError, ArithmeticError):
    """Two expressions that must agree differ by more than the tolerance."""
