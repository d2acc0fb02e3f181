"""
Exception hierarchy for hshcluster.
Every error carries the process exit code the CLI reports for it.
"""

from typing import Optional


class HshError(Exception):
    """Base class for all domain errors."""

    exit_code: int = 1


class UsageError(HshError):
    """Command-line request that cannot be satisfied as stated."""

    exit_code = 2


class FormatError(HshError, ValueError):
    """Input file does not parse to a square numeric grid."""

    exit_code = 4


class DimensionError(HshError, ValueError):
    """Operand shapes do not conform."""

    exit_code = 5


class DegenerateError(HshError, ValueError):
    """Input carries no structure to factorize (e.g. the zero matrix)."""

    exit_code = 5


class SizeError(HshError, ValueError):
    """Problem too large for exhaustive enumeration."""

    exit_code = 5


class ConvergenceError(HshError, ArithmeticError):
    """Eigensolver residual above tolerance."""

    exit_code = 5


class SingularError(HshError, ArithmeticError):
    """Gram matrix singular even after ridge regularization."""

    exit_code = 5

    def __init__(self, message: str, condition: Optional[float] = None):
        super().__init__(message)
        self.condition = condition


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code."""
    if isinstance(exc, HshError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return 3
    if isinstance(exc, (ValueError, IndexError)):
        return 4
    return 1
