from typing import Any, Optional


class TreeHarmonicError(Exception):
    """Base class for all domain errors."""

    def __init__(self, message: str, context: Optional[dict[str, Any]] = None):
        super().__init__(message)
        self.context = context or {}

    def __str__(self) -> str:
        base = super().__str__()
        if not self.context:
            return base
        details = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{base} ({details})"


class ConfigError(TreeHarmonicError):
    """Scene or document does not match the schema."""


class CycleDetected(TreeHarmonicError):
    """Children map is not a tree."""


class UnknownType(TreeHarmonicError):
    """Automaton references an undeclared cone type."""


class VertexNotFound(TreeHarmonicError):
    pass


class NotStochastic(TreeHarmonicError):
    """Transition coefficients of a row do not sum to 1."""


class ZeroMassArc(TreeHarmonicError):
    """An arc with zero mass where a quotient by its mass is needed."""


class MissingValue(TreeHarmonicError):
    pass


class NotTransient(TreeHarmonicError):
    pass


class NoConvergence(TreeHarmonicError):
    pass


class SingularSystem(TreeHarmonicError):
    """Dirichlet system cannot be solved; signals a malformed contour."""


class NoChainWithinDepth(TreeHarmonicError):
    pass


class DepthBudgetExceeded(TreeHarmonicError):
    pass


class EnumerationLimit(TreeHarmonicError):
    """Explicit enumeration would exceed the configured vertex budget."""
