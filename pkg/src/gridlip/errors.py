"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ValidationError (and subclasses) -> 1,
RegimeError -> 2, InternalInvariantError -> 3.
"""

from __future__ import annotations

__all__ = [
    "GridlipError",
    "ValidationError",
    "CapacityError",
    "ZeroCellError",
    "SizeCapError",
    "RegimeError",
    "InternalInvariantError",
]


class GridlipError(Exception):
    """Base class for package errors."""


class ValidationError(GridlipError):
    """Malformed or out-of-domain input."""


class CapacityError(ValidationError):
    """Box too small for the requested number of points."""


class ZeroCellError(ValidationError):
    """A dyadic cell holds no points, so no density can be formed."""


class SizeCapError(ValidationError):
    """Instance exceeds a hard size cap (exhaustive search guard)."""


class RegimeError(GridlipError):
    """Parameters fall outside the regime a bound requires."""


class InternalInvariantError(GridlipError):
    """A condition the construction guarantees failed; indicates a bug."""
