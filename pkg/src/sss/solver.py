"""Solve-Select-Scale iteration.

Each pass of the continuation loop

* solves the ridge system ``(A^T A + 2 eta I) x = A^T b + 2 eta c``,
* selects a support size ``rho = 1 + c^T A^T (Ax - b) / 2`` (rounded and
  clamped to ``[1, n]``),
* scales the ``rho`` largest magnitudes of ``x`` into the auxiliary vector
  ``c`` (everything else is zeroed) and restores order and signs,

then grows ``eta`` geometrically.  ``c`` starts at all ones.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .errors import ConfigError, DegenerateInputError, NumericalError, ShapeError
from .metrics import surrogate_cost
from .problem import Problem

__all__ = [
    "DEFAULT_ETA_START",
    "DEFAULT_ETA_END",
    "DEFAULT_ITERATIONS",
    "EigenFactorization",
    "SolverConfig",
    "IterateState",
    "TraceRecord",
    "Trace",
    "SolveResult",
    "x_update",
    "x_update_fast",
    "soft_support_size",
    "select_rho",
    "sort_magnitudes",
    "scale_c_per_component",
    "scale_c_hypersphere",
    "restore_c",
    "debias",
    "solve",
]

DEFAULT_ETA_START = 1.0
DEFAULT_ETA_END = 1e8
DEFAULT_ITERATIONS = 1500

C_MODES = ("per_component", "hypersphere")
STOP_RULES = ("eta_schedule", "residual_below_sigma")


def schedule_epsilon(eta_start: float, eta_end: float, iterations: int) -> float:
    """Growth rate that takes ``eta_start`` to ``eta_end`` in ``iterations`` steps."""
    return (eta_end / eta_start) ** (1.0 / iterations) - 1.0


def _normalize_choice(value: str, choices, what: str) -> str:
    key = str(value).strip().lower().replace("-", "_")
    aliases = {"schedule": "eta_schedule", "sigma": "residual_below_sigma"}
    key = aliases.get(key, key)
    if key not in choices:
        raise ConfigError(f"{what} must be one of {', '.join(choices)}; got {value!r}")
    return key


@dataclass(frozen=True)
class SolverConfig:
    """Continuation schedule and step options.

    The defaults run ``eta`` from 1 to 1e8 in about 1500 multiplicative
    steps.  ``debias`` replaces the final estimate by the least-squares fit
    of ``b`` on the support of ``c``.
    """

    eta_start: float = DEFAULT_ETA_START
    eta_end: float = DEFAULT_ETA_END
    epsilon: Optional[float] = None
    c_mode: str = "per_component"
    stop: str = "eta_schedule"
    max_iterations: int = 5000
    ridge_tolerance: float = 1e-8
    debias: bool = True

    def __post_init__(self):
        if not (self.eta_start > 0 and math.isfinite(self.eta_start)):
            raise ConfigError(f"eta_start must be positive and finite; got {self.eta_start}")
        if not (self.eta_end > self.eta_start and math.isfinite(self.eta_end)):
            raise ConfigError(
                f"eta_end must be finite and exceed eta_start={self.eta_start}; got {self.eta_end}"
            )
        eps = self.epsilon
        if eps is None:
            eps = schedule_epsilon(self.eta_start, self.eta_end, DEFAULT_ITERATIONS)
            object.__setattr__(self, "epsilon", eps)
        if not (eps > 0 and math.isfinite(eps)):
            raise ConfigError(f"epsilon must be positive; got {eps}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be a positive integer; got {self.max_iterations}")
        object.__setattr__(self, "max_iterations", int(self.max_iterations))
        if not self.ridge_tolerance > 0:
            raise ConfigError(f"ridge_tolerance must be positive; got {self.ridge_tolerance}")
        object.__setattr__(self, "c_mode", _normalize_choice(self.c_mode, C_MODES, "c_mode"))
        object.__setattr__(self, "stop", _normalize_choice(self.stop, STOP_RULES, "stop"))
        if self.scheduled_iterations > self.max_iterations:
            raise ConfigError(
                f"schedule needs {self.scheduled_iterations} iterations to reach eta_end "
                f"but max_iterations={self.max_iterations}"
            )

    @property
    def scheduled_iterations(self) -> int:
        """Number of loop passes before ``eta`` reaches ``eta_end``."""
        eta, k = self.eta_start, 0
        while eta < self.eta_end:
            eta *= 1.0 + self.epsilon
            k += 1
            if k > 10 * self.max_iterations:
                break
        return k

    def to_dict(self) -> dict:
        return {
            "eta_start": self.eta_start,
            "eta_end": self.eta_end,
            "epsilon": self.epsilon,
            "c_mode": self.c_mode,
            "stop": self.stop,
            "max_iterations": self.max_iterations,
            "ridge_tolerance": self.ridge_tolerance,
            "debias": self.debias,
        }


@dataclass(frozen=True, eq=False)
class EigenFactorization:
    """Eigendecomposition ``A^T A = L diag(lam) L^T``, computed once per matrix."""

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray

    @classmethod
    def from_matrix(cls, A) -> "EigenFactorization":
        A = np.asarray(A, dtype=float)
        lam, vecs = np.linalg.eigh(A.T @ A)
        # A^T A is PSD; clip round-off negatives
        lam = np.clip(lam, 0.0, None)
        vecs.setflags(write=False)
        lam.setflags(write=False)
        return cls(eigenvectors=vecs, eigenvalues=lam)

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        L = self.eigenvectors
        return (L * self.eigenvalues) @ L.T

    def solve_shifted(self, rhs, eta: float) -> np.ndarray:
        """Return ``(A^T A + 2 eta I)^{-1} rhs``."""
        L = self.eigenvectors
        return L @ ((L.T @ rhs) / (self.eigenvalues + 2.0 * eta))


@dataclass
class IterateState:
    """Snapshot handed to ``solve`` callbacks after every SCALE step."""

    iteration: int
    eta: float
    x: np.ndarray
    c: np.ndarray
    rho: int
    rho_raw: float
    sorted_x: np.ndarray
    scaled: np.ndarray
    permutation: np.ndarray
    signs: np.ndarray


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    eta: float
    rho: int
    residual: float
    cost: Optional[float]
    wall_time: float


@dataclass
class Trace:
    """Per-iteration log of a solve run."""

    records: List[TraceRecord] = field(default_factory=list)

    CSV_COLUMNS = ("iteration", "eta", "rho", "residual", "cost")

    def append(self, record: TraceRecord) -> None:
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError("trace iterations must increase")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    def column(self, name: str) -> np.ndarray:
        return np.array(
            [np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records],
            dtype=float,
        )

    def rows(self):
        for r in self.records:
            yield [r.iteration, repr(r.eta), r.rho, repr(r.residual), "" if r.cost is None else repr(r.cost)]


@dataclass
class SolveResult:
    """Output of :func:`solve`.

    ``c`` is the last SCALE output (exactly ``rho`` nonzeros); ``estimate``
    is the reconstruction to report, i.e. ``c`` refitted by least squares
    on its support when ``debias`` is enabled.
    """

    x: np.ndarray
    c: np.ndarray
    estimate: np.ndarray
    trace: Trace
    rho: int
    iterations: int
    stop_reason: str
    debiased: bool

    def __iter__(self):
        # allows ``x, c, trace = solve(...)``
        return iter((self.x, self.c, self.trace))


def _check_eta(eta: float) -> None:
    if not eta > 0:
        raise ConfigError(f"eta must be positive; got {eta}")


def x_update(problem: Problem, c, eta: float) -> np.ndarray:
    """Dense solve of ``(A^T A + 2 eta I) x = A^T b + 2 eta c``."""
    _check_eta(eta)
    A = problem.A
    c = np.asarray(c, dtype=float)
    if c.shape != (problem.n,):
        raise ShapeError(f"c has shape {c.shape}, expected ({problem.n},)")
    lhs = A.T @ A
    lhs[np.diag_indices_from(lhs)] += 2.0 * eta
    return np.linalg.solve(lhs, problem.Atb + 2.0 * eta * c)


def x_update_fast(factorization: EigenFactorization, A, b, c, eta: float) -> np.ndarray:
    """Same as :func:`x_update` using a cached eigendecomposition of ``A^T A``."""
    _check_eta(eta)
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    if A.ndim != 2 or factorization.n != A.shape[1]:
        raise ShapeError(
            f"factorization is for n={factorization.n} but A has shape {np.shape(A)}"
        )
    if c.shape != (A.shape[1],):
        raise ShapeError(f"c has shape {c.shape}, expected ({A.shape[1]},)")
    return factorization.solve_shifted(A.T @ np.asarray(b, dtype=float) + 2.0 * eta * c, eta)


def soft_support_size(A, b, x, c) -> float:
    """Unrounded support size ``1 + c^T A^T (Ax - b) / 2``."""
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    nz = np.flatnonzero(c)
    Ac = A[:, nz] @ c[nz]
    value = 1.0 + float(Ac @ (A @ x - b)) / 2.0
    if not math.isfinite(value):
        raise NumericalError("support-size estimate is not finite")
    return value


def select_rho(A, b, x, c, n: int) -> int:
    """Round :func:`soft_support_size` to the nearest integer in ``[1, n]``."""
    raw = soft_support_size(A, b, x, c)
    return int(min(max(np.rint(raw), 1), n))


def sort_magnitudes(x):
    """Sort ``|x|`` in descending order.

    Returns ``(sorted_magnitudes, permutation, signs)`` where
    ``permutation[j]`` is the original index of the ``j``-th largest
    magnitude.  Ties keep the lower index first.
    """
    x = np.asarray(x, dtype=float)
    mags = np.abs(x)
    perm = np.argsort(-mags, kind="stable")
    return mags[perm], perm, np.sign(x)


def _check_scale_args(sorted_x, rho, eta):
    sorted_x = np.asarray(sorted_x, dtype=float)
    if sorted_x.ndim != 1:
        raise ShapeError("sorted_x must be 1-d")
    if int(rho) != rho or not 1 <= rho <= sorted_x.size:
        raise ConfigError(f"rho must be an integer in [1, {sorted_x.size}]; got {rho}")
    _check_eta(eta)
    return sorted_x, int(rho)


def scale_c_per_component(sorted_x, rho: int, eta: float) -> np.ndarray:
    """Largest entry kept as is, entries 2..rho solve ``c (c - x) = 1/eta``.

    The positive root is ``x (1 + sqrt(1 + 4/(eta x^2))) / 2``; it is
    evaluated as ``x + (2/(eta x)) / (1 + sqrt(1 + 4/(eta x^2)))`` to avoid
    cancellation when ``eta x^2`` is large.  Zero magnitudes map to 0.
    """
    sorted_x, rho = _check_scale_args(sorted_x, rho, eta)
    c = np.zeros_like(sorted_x)
    c[0] = sorted_x[0]
    top = sorted_x[1:rho]
    pos = top > 0
    t = top[pos]
    shift = (2.0 / (eta * t)) / (1.0 + np.sqrt(1.0 + 4.0 / (eta * t * t)))
    c[1:rho][pos] = t + shift
    return c


def scale_c_hypersphere(sorted_x, rho: int, eta: float) -> np.ndarray:
    """Uniform scaling ``alpha * x`` of the top ``rho`` entries.

    ``alpha = 1/2 + sqrt(1/4 + (rho - 1)/(eta ||x||^2))`` puts ``c`` on the
    sphere ``||c - x/2||^2 = (rho - 1)/eta + ||x||^2/4``.
    """
    sorted_x, rho = _check_scale_args(sorted_x, rho, eta)
    top = sorted_x[:rho]
    norm2 = float(top @ top)
    if norm2 == 0:
        raise DegenerateInputError("top-rho entries are all zero")
    alpha = 0.5 + math.sqrt(0.25 + (rho - 1) / (eta * norm2))
    c = np.zeros_like(sorted_x)
    c[:rho] = alpha * top
    return c


def restore_c(scaled, permutation, signs) -> np.ndarray:
    """Undo the sort: ``c[permutation] = scaled``, then apply ``signs``."""
    scaled = np.asarray(scaled, dtype=float)
    permutation = np.asarray(permutation)
    signs = np.asarray(signs, dtype=float)
    if not (scaled.shape == permutation.shape == signs.shape) or scaled.ndim != 1:
        raise ShapeError(
            f"length mismatch: scaled {scaled.shape}, permutation {permutation.shape}, signs {signs.shape}"
        )
    c = np.zeros_like(scaled)
    c[permutation] = scaled
    return c * signs


def debias(problem: Problem, c) -> Optional[np.ndarray]:
    """Least-squares refit of ``b`` on the support of ``c``.

    Returns ``None`` when the support is empty or larger than ``m``.
    """
    from .baselines import least_squares

    support = np.flatnonzero(c)
    if support.size == 0 or support.size > problem.m:
        return None
    out = np.zeros(problem.n)
    out[support] = least_squares(problem.A[:, support], problem.b)
    return out


_SCALERS = {
    "per_component": scale_c_per_component,
    "hypersphere": scale_c_hypersphere,
}


def solve(
    problem: Problem,
    config: Optional[SolverConfig] = None,
    callback: Optional[Callable[[IterateState], None]] = None,
) -> SolveResult:
    """Run Solve-Select-Scale on ``problem``.

    ``callback`` (if given) receives an :class:`IterateState` after every
    SCALE step.
    """
    config = config or SolverConfig()
    sigma2 = None
    if config.stop == "residual_below_sigma":
        if problem.noise_variance is None:
            raise ConfigError("stop='residual_below_sigma' needs problem.noise_variance")
        sigma2 = problem.noise_variance

    A, b, n, m = problem.A, problem.b, problem.n, problem.m
    fac = problem.factorization
    L = fac.eigenvectors
    lam = fac.eigenvalues
    Atb_proj = L.T @ problem.Atb
    scale = _SCALERS[config.c_mode]

    trace = Trace()
    c = np.ones(n)
    eta = config.eta_start
    it = 0
    rho = n
    x = np.zeros(n)
    estimate = None
    stop_reason = "schedule"
    t0 = time.perf_counter()

    while eta < config.eta_end:
        if it >= config.max_iterations:
            stop_reason = "max_iterations"
            break
        # SOLVE
        nz = np.flatnonzero(c)
        Ltc = L[nz].T @ c[nz]
        x = L @ ((Atb_proj + 2.0 * eta * Ltc) / (lam + 2.0 * eta))
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"x update produced non-finite values at iteration {it}")
        r = A @ x - b
        # SELECT
        rho_raw = 1.0 + float((A[:, nz] @ c[nz]) @ r) / 2.0
        if not math.isfinite(rho_raw):
            raise NumericalError(f"support-size estimate not finite at iteration {it}")
        rho = int(min(max(np.rint(rho_raw), 1), n))
        # SCALE
        sorted_x, perm, signs = sort_magnitudes(x)
        if sorted_x[0] == 0:
            scaled = np.zeros(n)
        else:
            scaled = scale(sorted_x, rho, eta)
        c = restore_c(scaled, perm, signs)

        support = c[c != 0]
        cost = surrogate_cost(support) if support.size else None
        residual = float(np.linalg.norm(r))
        trace.append(TraceRecord(it, eta, rho, residual, cost, time.perf_counter() - t0))
        if callback is not None:
            callback(IterateState(it, eta, x, c, rho, rho_raw, sorted_x, scaled, perm, signs))
        it += 1

        if sigma2 is not None:
            candidate = None
            if config.debias and support.size <= m // 2:
                candidate = debias(problem, c)
            if candidate is None:
                candidate = x
            if float(np.sum((A @ candidate - b) ** 2)) < sigma2:
                estimate = candidate
                stop_reason = "residual"
                break

        eta *= 1.0 + config.epsilon

    debiased = False
    if estimate is None:
        refit = debias(problem, c) if config.debias else None
        estimate = c.copy() if refit is None else refit
        debiased = refit is not None
    else:
        debiased = estimate is not x

    return SolveResult(
        x=x,
        c=c,
        estimate=estimate,
        trace=trace,
        rho=rho,
        iterations=it,
        stop_reason=stop_reason,
        debiased=debiased,
    )
