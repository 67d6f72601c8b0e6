"""Solve-Select-Scale sparse recovery with norm-ratio sparsity metrics."""

from .errors import (
    DegenerateInputError,
    NumericalError,
    ShapeError,
    SSSError,
    UndefinedAtZeroError,
)
from .metrics import (
    HessianMatrix,
    quadratic_form,
    sparsity_ratio,
    surrogate_cost,
    surrogate_gradient,
    surrogate_hessian,
)
from .problem import Problem
from .solver import (
    EigenFactorization,
    IterateState,
    SolveResult,
    SolverConfig,
    Trace,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateInputError",
    "EigenFactorization",
    "HessianMatrix",
    "IterateState",
    "NumericalError",
    "Problem",
    "SSSError",
    "ShapeError",
    "SolveResult",
    "SolverConfig",
    "Trace",
    "UndefinedAtZeroError",
    "quadratic_form",
    "solve",
    "sparsity_ratio",
    "surrogate_cost",
    "surrogate_gradient",
    "surrogate_hessian",
]
