"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the admissible parameter range."""


class QuadratureError(RuntimeError):
    """A quadrature or oscillatory-tail acceleration failed to converge."""


class TruncationError(RuntimeError):
    """A truncated series did not decay before its truncation index."""


class InconsistencyError(RuntimeError):
    """Two independent evaluation routes disagree beyond tolerance."""


class GeometryError(ValueError):
    """Points or balls violate the geometric preconditions of an operation."""


class ContinuationError(RuntimeError):
    """Shifted Neumann continuation did not converge within the shift budget."""


class ConfigError(ValueError):
    """An experiment configuration failed validation."""
