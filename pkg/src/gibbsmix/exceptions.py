"""Exception hierarchy shared by every module of the package."""


class GibbsMixError(Exception):
    """Base class for all package errors."""


class DomainError(GibbsMixError, ValueError):
    """A point or parameter lies outside the admissible domain."""


class EvaluationError(GibbsMixError, ArithmeticError):
    """A potential evaluated to a non-finite value."""


class DegenerateSliceError(GibbsMixError, ArithmeticError):
    """A conditional slice carries no mass on its grid."""


class GridMismatchError(GibbsMixError, ValueError):
    """Two pmfs that must share a grid do not."""


class CapExceededError(GibbsMixError, ValueError):
    """A finite-state computation exceeds its configured size cap."""


class UnavailableError(GibbsMixError):
    """A bound cannot be produced because an input is missing or degenerate.

    Attributes:
        symbol: human-readable name of the missing or degenerate quantity.
    """

    def __init__(self, symbol: str, message: str | None = None):
        self.symbol = symbol
        super().__init__(message or f"unavailable: missing {symbol}")
