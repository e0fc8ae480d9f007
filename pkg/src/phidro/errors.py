"""Exception types shared across the package."""


class PhidroError(Exception):
    """Base class for all package errors."""


class ParameterError(PhidroError, ValueError):
    """An argument is outside its admissible range."""


class UnsupportedDivergenceError(PhidroError):
    """The requested operation is not defined for this divergence."""


class ResolutionError(PhidroError):
    """A discretisation is too coarse for the requested quantity."""


class NumericalError(PhidroError, ArithmeticError):
    """A computation produced a non-finite value."""
