"""Exception types shared across the package."""


class MCLabError(Exception):
    """Base class for all package-specific failures."""


class ConfigurationError(MCLabError, ValueError):
    """A parameter set, grid, or config document violates its contract."""


class DomainError(MCLabError, ValueError):
    """A function argument lies outside the mathematical domain."""


class NumericalError(MCLabError, ArithmeticError):
    """A numerical routine failed to converge or produced non-finite values."""


class ConflictError(MCLabError, RuntimeError):
    """An operation would overwrite state that is already finalized."""


class FitError(MCLabError, RuntimeError):
    """Model fitting cannot proceed on the given data."""


class SessionFormatError(MCLabError, ValueError):
    """A persisted session file is malformed or truncated."""
