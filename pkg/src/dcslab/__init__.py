"""Monte Carlo and exact-arithmetic companions to dense countable sets of Brownian minimizers."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    ConsistencyError,
    DcsError,
    DegeneratePathError,
    DomainError,
    NumericError,
    ResolutionError,
)

__all__ = [
    "__version__",
    "ConfigError",
    "ConsistencyError",
    "DcsError",
    "DegeneratePathError",
    "DomainError",
    "NumericError",
    "ResolutionError",
]
