"""Critical-point analysis and constructive Morse perturbation on implicit
submanifolds of R^n.

The package decomposes a compact implicit submanifold into coordinate-
projection charts, analyzes critical points of twice-differentiable functions
restricted to it, and perturbs any such function into one with only
nondegenerate critical points while staying within a prescribed C^2 budget.
"""

from .errors import (
    ConvergenceError,
    CoverFailure,
    DegenerateCriticalPoint,
    DegeneratePresent,
    EvaluationDomainError,
    ExpressionError,
    ManifoldFileError,
    MorsekitError,
    NotMorse,
    NotNested,
    NotRegularPoint,
    OverlappingSets,
    RejectionBudgetExceeded,
    SheetJump,
    UncoveredPoint,
)
from .expressions import ScalarField, hinge3, partial_derivative

__version__ = "0.1.0"
