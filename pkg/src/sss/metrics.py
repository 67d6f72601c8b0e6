"""Norm-ratio sparsity measure and the log surrogate cost.

The surrogate ``f(x) = -sum(log x_i^2) + log ||x||_2^2`` is what the
Solve-Select-Scale iteration minimizes over the selected support.  Its
gradient and Hessian are given in closed form so they can be checked
against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ShapeError, UndefinedAtZeroError

__all__ = [
    "HessianMatrix",
    "sparsity_ratio",
    "surrogate_cost",
    "surrogate_gradient",
    "surrogate_hessian",
    "quadratic_form",
]


def _as_signal(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ShapeError(f"expected a non-empty 1-d signal, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DegenerateInputError("signal has non-finite entries")
    return x


def _nonzero_signal(x) -> np.ndarray:
    x = _as_signal(x)
    if np.any(x == 0):
        raise UndefinedAtZeroError(
            f"surrogate undefined at zero entries (indices {np.flatnonzero(x == 0).tolist()[:10]})"
        )
    return x


@dataclass(frozen=True)
class HessianMatrix:
    """Hessian of the surrogate cost together with ``s2 = sum(x_i^2)``."""

    entries: np.ndarray
    s2: float

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def sparsity_ratio(x) -> float:
    """Return ``||x||_1^2 / ||x||_2^2``.

    The value lies in ``[1, ||x||_0]`` and is invariant to rescaling of
    ``x``.  Raises :class:`DegenerateInputError` for the all-zero vector.
    """
    x = _as_signal(x)
    a = np.abs(x)
    peak = a.max()
    if peak == 0:
        raise DegenerateInputError("sparsity ratio is 0/0 for the zero vector")
    # normalize first so tiny or huge inputs neither underflow nor overflow
    a = a / peak
    return float(a.sum() ** 2 / np.dot(a, a))


def surrogate_cost(x) -> float:
    """Log surrogate ``-sum(log x_i^2) + log(sum x_i^2)``."""
    x = _nonzero_signal(x)
    sq = x * x
    return float(-np.sum(np.log(sq)) + np.log(sq.sum()))


def surrogate_gradient(x) -> np.ndarray:
    """Gradient ``-2/x_i + 2 x_i / S2`` of :func:`surrogate_cost`."""
    x = _nonzero_signal(x)
    s2 = np.dot(x, x)
    return -2.0 / x + 2.0 * x / s2


def surrogate_hessian(x) -> HessianMatrix:
    """Closed-form Hessian of :func:`surrogate_cost`.

    Diagonal ``2 (S2 - x_i^2)(2 x_i^2 + S2) / (x_i^2 S2^2)``, off-diagonal
    ``-4 x_i x_j / S2^2``.
    """
    x = _nonzero_signal(x)
    sq = x * x
    s2 = float(sq.sum())
    h = -4.0 * np.outer(x, x) / s2**2
    diag = 2.0 * (s2 - sq) * (2.0 * sq + s2) / (sq * s2**2)
    np.fill_diagonal(h, diag)
    return HessianMatrix(entries=h, s2=s2)


def quadratic_form(hessian: HessianMatrix | np.ndarray, y) -> float:
    """Return ``y^T H y``."""
    h = hessian.entries if isinstance(hessian, HessianMatrix) else np.asarray(hessian, dtype=float)
    y = np.asarray(y, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or y.shape != (h.shape[0],):
        raise ShapeError(f"cannot form y^T H y with H {h.shape} and y {y.shape}")
    return float(y @ h @ y)
