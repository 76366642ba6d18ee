"""Exception hierarchy.

Validation problems are returned as data by :func:`gendiff.characteristics.validate`;
the classes here are for operations whose preconditions cannot be met.
"""


class GenDiffError(Exception):
    """Base class for all toolkit errors."""


class OutOfRange(GenDiffError, ValueError):
    pass


class OrderViolation(GenDiffError, ValueError):
    pass


class InversionFailure(GenDiffError, ArithmeticError):
    pass


class NonLocallyIntegrable(GenDiffError, ArithmeticError):
    pass


class ZeroSigma(GenDiffError, ValueError):
    pass


class InvalidSpec(GenDiffError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "invalid spec")


class BudgetExceeded(GenDiffError, ValueError):
    pass


class NonPositiveRho(GenDiffError, ValueError):
    pass


class WindowOutOfRange(GenDiffError, ValueError):
    pass


class WindowTooSmall(GenDiffError, ValueError):
    pass


class NonPositiveStep(GenDiffError, ValueError):
    pass


class StartOutsideWindow(GenDiffError, ValueError):
    pass


class LevelOutsideWindow(GenDiffError, ValueError):
    pass


class InfiniteTarget(GenDiffError, ArithmeticError):
    pass


class SpecParseError(GenDiffError, ValueError):
    """Malformed spec file; carries 1-based line and column."""

    def __init__(self, message, line, column=1):
        self.line = line
        self.column = column
        self.message = message
        super().__init__(f"line {line}, column {column}: {message}")
