"""The linear measurement problem ``Ax = b``."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import DegenerateInputError, ShapeError


@dataclass(frozen=True, eq=False)
class Problem:
    """Measurement matrix ``A`` (m x n), observations ``b`` (m,).

    ``truth`` and ``noise_variance`` are optional and only used for
    evaluation and the noisy stopping rule.  Instances are immutable and
    cache the eigendecomposition of ``A^T A`` on first use.
    """

    A: np.ndarray
    b: np.ndarray
    truth: Optional[np.ndarray] = None
    noise_variance: Optional[float] = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float)
        if A.ndim != 2 or min(A.shape) < 1:
            raise ShapeError(f"A must be a non-empty matrix, got shape {A.shape}")
        if b.shape != (A.shape[0],):
            raise ShapeError(f"b has shape {b.shape}, expected ({A.shape[0]},)")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise DegenerateInputError("A and b must be finite")
        zero_cols = np.flatnonzero(~A.any(axis=0))
        if zero_cols.size:
            raise DegenerateInputError(f"A has all-zero columns {zero_cols.tolist()[:10]}")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.truth is not None:
            truth = np.array(self.truth, dtype=float)
            if truth.shape != (A.shape[1],):
                raise ShapeError(f"truth has shape {truth.shape}, expected ({A.shape[1]},)")
            truth.setflags(write=False)
            object.__setattr__(self, "truth", truth)
        if self.noise_variance is not None:
            nv = float(self.noise_variance)
            if not nv >= 0:
                raise DegenerateInputError("noise_variance must be >= 0")
            object.__setattr__(self, "noise_variance", nv)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @cached_property
    def Atb(self) -> np.ndarray:
        return self.A.T @ self.b

    @cached_property
    def factorization(self):
        from .solver import EigenFactorization

        return EigenFactorization.from_matrix(self.A)

    def residual(self, x) -> float:
        return float(np.linalg.norm(self.A @ x - self.b))
