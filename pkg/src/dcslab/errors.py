"""Exception hierarchy shared by the simulation and solver modules."""


class DcsError(Exception):
    """Base class for all library errors."""


class DomainError(DcsError, ValueError):
    """Argument outside the domain where a formula or operation is defined."""


class ResolutionError(DcsError, ValueError):
    """Requested dyadic level is not representable at the path depth."""


class DegeneratePathError(DcsError, ValueError):
    """Two competing minima are exactly equal; the selection rule is undefined."""


class NumericError(DcsError, ArithmeticError):
    """Quadrature or another numerical routine missed its tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class ConfigError(DcsError, ValueError):
    """Invalid run configuration (bad oracle, malformed instance file, ...)."""


class ConsistencyError(DcsError, RuntimeError):
    """An internal invariant was violated; this signals a bug, not bad input."""
