"""Exception hierarchy. Each class carries the process exit code used by the CLI."""
from typing import Optional


class PocanError(Exception):
    """Base class for all errors raised by pocan."""

    exit_code = 4


class ModelSyntaxError(PocanError):
    """A model or DRA file does not follow the grammar."""

    exit_code = 2

    def __init__(self, message: str, line: int, column: int = 1):
        self.line = line
        self.column = column
        self.reason = message
        super().__init__(f"line {line}, column {column}: {message}")


class ModelValidationError(PocanError):
    """The input parsed but violates a model invariant."""

    exit_code = 2


class DomainError(PocanError, ValueError):
    """A bound formula was evaluated outside its domain."""

    exit_code = 1


class PrecisionInfeasibleError(PocanError):
    """The requested precision cannot be reached with the available numeric backends.

    Args:
        message: Human readable diagnostic.
        log2_value: Base-2 logarithm of the offending quantity (tolerance or bound), if known.
    """

    exit_code = 3

    def __init__(self, message: str, log2_value: Optional[float] = None):
        self.log2_value = log2_value
        if log2_value is not None:
            message = f"{message} (log2 = {log2_value:.6g})"
        super().__init__(message)


class InvariantViolationError(PocanError):
    """An internal consistency check failed."""

    exit_code = 4


class SingularSystemError(InvariantViolationError):
    pass


class ConvergenceError(InvariantViolationError):
    def __init__(self, message: str, residual: Optional[float] = None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (last residual {residual:.3e})"
        super().__init__(message)


class NoTerminatingSamplesError(InvariantViolationError):
    pass
