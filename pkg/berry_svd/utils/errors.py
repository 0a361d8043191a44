"""Exceptions raised by the berry_svd package."""
from typing import Optional, Tuple


class BerrySVDError(Exception):
    """Base class for every error raised by berry_svd."""


class DimensionError(BerrySVDError, ValueError):
    """Matrix shape does not fit the operation."""


class DomainError(BerrySVDError, ValueError):
    """Input outside the mathematical domain of the operation."""


class ConfigError(BerrySVDError, ValueError):
    """Invalid option value."""


class ParseError(BerrySVDError, ValueError):
    """Malformed family, loop or result document."""

    def __init__(self, message: str, location: str = "$"):
        super().__init__(f"{location}: {message}")
        self.location = location


class NearDegenerateError(BerrySVDError):
    """Singular values too close to each other or to zero."""

    def __init__(self, message: str, pair: Tuple[int, int], value: float):
        super().__init__(message)
        self.pair = pair
        self.value = value


class StepTooLargeError(BerrySVDError):
    """Consecutive singular vectors are not correlated enough to be matched."""

    def __init__(self, message: str, column: int, overlap: float):
        super().__init__(message)
        self.column = column
        self.overlap = overlap


class ContinuationFailedError(BerrySVDError):
    """Continuation could not advance along the loop."""

    def __init__(self, message: str, last_t: float, reason: Optional[str] = None):
        super().__init__(f"{message} (last good t={last_t:.12g})")
        self.last_t = last_t
        self.reason = reason or message


class RefinementNeededError(BerrySVDError):
    """A per-step phase increment is too large to be unwrapped safely."""

    def __init__(self, message: str, column: int, step: int, increment: float):
        super().__init__(message)
        self.column = column
        self.step = step
        self.increment = increment


class ContractError(BerrySVDError):
    """An object passed between operations violates its contract."""


class JacobiConvergenceError(BerrySVDError, ArithmeticError):
    """One-sided Jacobi did not converge within the sweep cap."""
