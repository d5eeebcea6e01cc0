"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from __future__ import annotations


class PVRError(Exception):
    exit_code = 1


class UsageError(PVRError, ValueError):
    """Bad arguments: out-of-range complexity, vocabulary, counts."""

    exit_code = 1


class InvalidComplexity(UsageError):
    pass


class InvalidWindow(UsageError):
    pass


class BudgetExceeded(UsageError):
    """An exhaustive enumeration would exceed its fixed budget."""


class ValidationError(PVRError):
    exit_code = 2


class BadMagic(ValidationError):
    pass


class UnsupportedVersion(ValidationError):
    pass


class UnsupportedAggregation(ValidationError):
    pass


class TruncatedFile(ValidationError):
    pass


class RecordInvariantError(ValidationError):
    """A record holds an out-of-range digit or a label that does not re-verify."""


class CountMismatch(ValidationError):
    pass


class InfeasibleHoldout(ValidationError):
    pass


class NumericFailure(PVRError, ArithmeticError):
    exit_code = 3

    def __init__(self, message: str, layer: int | None = None):
        super().__init__(message)
        self.layer = layer


class OutOfCapacity(PVRError, MemoryError):
    exit_code = 4
