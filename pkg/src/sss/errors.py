"""Exception types shared across the package."""


class SSSError(Exception):
    """Base class for all package errors."""


class ShapeError(SSSError, ValueError):
    """Array dimensions do not agree."""


class UndefinedAtZeroError(SSSError, ValueError):
    """The log surrogate (or a derivative) was evaluated at a zero entry."""


class DegenerateInputError(SSSError, ValueError):
    """Input lies outside the domain of an operation (e.g. zero norm)."""


class NumericalError(SSSError, ArithmeticError):
    """A computation produced a non-finite value."""


class ConfigError(SSSError, ValueError):
    """Invalid solver, generator or run configuration."""
