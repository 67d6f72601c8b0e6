"""Reference reconstructions: CoSaMP and plain least squares."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .problem import Problem

log = logging.getLogger(__name__)

__all__ = ["CosampConfig", "cosamp", "least_squares"]


def least_squares(A, b) -> np.ndarray:
    """Minimum-norm minimizer of ``||Ax - b||_2`` (SVD based)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.shape != (A.shape[0],):
        raise ShapeError(f"incompatible shapes A {A.shape}, b {b.shape}")
    return np.linalg.lstsq(A, b, rcond=None)[0]


@dataclass(frozen=True)
class CosampConfig:
    """``k`` is the caller's sparsity guess; CoSaMP returns k-sparse vectors."""

    k: int
    max_iterations: int = 100
    residual_tolerance: float = 1e-6

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise ConfigError(f"k must be a non-negative integer; got {self.k}")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not self.residual_tolerance >= 0:
            raise ConfigError("residual_tolerance must be >= 0")

    def to_dict(self) -> dict:
        return {
            "k": int(self.k),
            "max_iterations": self.max_iterations,
            "residual_tolerance": self.residual_tolerance,
        }


def _top(values: np.ndarray, count: int) -> np.ndarray:
    return np.argsort(-np.abs(values), kind="stable")[:count]


def cosamp(problem: Problem, config: CosampConfig):
    """Compressive sampling matching pursuit.

    Each iteration merges the ``2k`` largest entries of the proxy
    ``A^T r`` with the current support, solves least squares there and
    prunes back to the ``k`` largest.  An iteration that would increase
    the residual is rejected and the loop halts.

    Returns
    -------
    x : ndarray
        k-sparse estimate.
    iterations : int
        Number of accepted iterations.
    """
    A, b, n, m = problem.A, problem.b, problem.n, problem.m
    k = int(config.k)
    if k > n:
        raise ConfigError(f"k={k} exceeds signal length n={n}")
    x = np.zeros(n)
    if k == 0:
        return x, 0
    if 2 * k > m:
        log.warning("cosamp: 2k=%d exceeds m=%d, support solves are underdetermined", 2 * k, m)

    r = b.copy()
    rnorm = float(np.linalg.norm(r))
    iterations = 0
    while iterations < config.max_iterations and rnorm > config.residual_tolerance:
        proxy = A.T @ r
        merged = np.union1d(_top(proxy, 2 * k), np.flatnonzero(x))
        z = least_squares(A[:, merged], b)
        keep = _top(z, k)
        x_new = np.zeros(n)
        x_new[merged[keep]] = z[keep]
        r_new = b - A @ x_new
        new_norm = float(np.linalg.norm(r_new))
        if new_norm > rnorm:
            break
        stalled = np.array_equal(x_new, x)
        x, r, rnorm = x_new, r_new, new_norm
        iterations += 1
        if stalled:
            break
    return x, iterations
