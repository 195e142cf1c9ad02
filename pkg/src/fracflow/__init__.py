"""Fractional heat flows: kernels, balance-law verdicts, ball Green's functions and lattice symmetry probes."""

from .errors import (
    ConfigError,
    ContinuationError,
    DomainError,
    GeometryError,
    InconsistencyError,
    QuadratureError,
    TruncationError,
)
from .specfun import MediumParams

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContinuationError",
    "DomainError",
    "GeometryError",
    "InconsistencyError",
    "MediumParams",
    "QuadratureError",
    "TruncationError",
]
