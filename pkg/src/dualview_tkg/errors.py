"""Exception hierarchy.

Each category maps to a distinct CLI exit code (see ``cli.EXIT_CODES``).
"""


class TKGError(Exception):
    """Base class for all package errors."""


class DataError(TKGError, ValueError):
    """Malformed or inconsistent dataset / rule / config input."""


class ShapeError(TKGError, ValueError):
    """Tensor shapes or checkpoint layouts are incompatible."""


class NumericError(TKGError, ArithmeticError):
    """A forward value became NaN/Inf, or an undefined operation was requested."""


class StaleTapeError(TKGError, RuntimeError):
    """backward() called on a graph whose tape was already consumed."""
