"""Exception hierarchy shared across the package."""


class SemiCompError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SemiCompError, ValueError):
    """Invalid model, spline or run configuration."""


class DomainError(SemiCompError, ValueError):
    """Input data outside the domain an operation accepts."""


class NumericalDomainError(SemiCompError, ArithmeticError):
    """A computation produced values outside their mathematical domain."""


class InitializationError(SemiCompError):
    """Objective is not finite at the starting point."""


class InferenceError(SemiCompError):
    """Variance or degrees-of-freedom computation is not possible."""
