"""Exception hierarchy shared across the package."""


class PrivaugError(Exception):
    """Base class for all package errors."""


class ParameterError(PrivaugError, ValueError):
    """A distribution or mechanism parameter is out of range."""


class InputError(PrivaugError, ValueError):
    """Data passed to an operation has the wrong shape or values."""


class ConfigError(PrivaugError, ValueError):
    """A sampler or run configuration is invalid."""


class NumericError(PrivaugError, ArithmeticError):
    """A numerical computation produced an unusable value."""


class CapacityError(PrivaugError):
    """A brute-force computation was asked to exceed its size cap."""
