"""Exception types shared across the package.

Every error carries a stable machine-readable ``code`` (the class name) so
batch reports can surface failures without parsing messages.
"""

from __future__ import annotations


class MorsekitError(Exception):
    """Base class for all package errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class ExpressionError(MorsekitError):
    """Expression text failed to tokenize or parse."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class EvaluationDomainError(MorsekitError):
    """Expression evaluation left the real domain (division by zero, overflow)."""


class ManifoldFileError(MorsekitError):
    """Manifold definition file is malformed."""


class NotRegularPoint(MorsekitError):
    """Constraint Jacobian is rank deficient at the requested point."""


class ConvergenceError(MorsekitError):
    """Iteration budget exhausted before reaching tolerance."""


class SheetJump(MorsekitError):
    """Graph solve converged on a different local sheet than the seed."""


class UncoveredPoint(MorsekitError):
    """A sample point has no chart with membership score above threshold."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


class DegenerateCriticalPoint(MorsekitError):
    """Hessian determinant below tolerance; Morse index undefined."""


class DegeneratePresent(MorsekitError):
    """A census contains degenerate points where none are allowed."""


class OverlappingSets(MorsekitError):
    """Separation requested between sets that share sample points."""


class NotNested(MorsekitError):
    """Claimed inclusion between regions fails on the sample set."""


class CoverFailure(MorsekitError):
    """A collection of regions fails to cover the sample set."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


class NotMorse(MorsekitError):
    """Field has a degenerate critical point where a Morse function is required."""


class RejectionBudgetExceeded(MorsekitError):
    """Coefficient rejection sampling failed to find a clean shift."""
