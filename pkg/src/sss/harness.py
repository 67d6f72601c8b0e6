"""Problem generation, Monte-Carlo grids and result aggregation."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .baselines import CosampConfig, cosamp, least_squares
from .errors import ConfigError, DegenerateInputError
from .metrics import sparsity_ratio
from .problem import Problem
from .solver import SolverConfig, solve

__all__ = [
    "GENERATOR_METADATA",
    "GeneratorSpec",
    "MethodSpec",
    "ExperimentRecord",
    "SummaryTable",
    "generate_problem",
    "derive_seed",
    "evaluate",
    "run_trial",
    "run_grid",
    "summarize",
    "strip_runtime",
    "atomic_write_text",
    "write_records_ndjson",
    "read_records_ndjson",
    "write_summary_csv",
    "write_trace_csv",
]

SUPPORT_THRESHOLD = 1e-8

GENERATOR_METADATA = {
    "matrix": "iid standard normal entries, no column scaling",
    "support": "uniform random distinct positions",
    "amplitudes": "uniform magnitude in amplitude_range, uniform random sign",
    "noise": "measurement space, iid normal with variance noise_variance/m per entry",
}

SEED_MAX = 2**64


@dataclass(frozen=True)
class GeneratorSpec:
    """Size, sparsity and noise level of a random instance."""

    n: int
    k: int
    m: int
    noise_variance: float = 0.0
    seed: int = 0
    amplitude_range: Tuple[float, float] = (0.5, 1.0)

    def __post_init__(self):
        for name in ("n", "k", "m", "seed"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise ConfigError(f"{name} must be an integer; got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.n < 1:
            raise ConfigError(f"n must be >= 1; got {self.n}")
        if not 0 <= self.k <= self.n:
            raise ConfigError(f"k must lie in [0, n={self.n}]; got {self.k}")
        if not 1 <= self.m <= self.n:
            raise ConfigError(f"m must lie in [1, n={self.n}]; got {self.m}")
        if not (self.noise_variance >= 0 and math.isfinite(self.noise_variance)):
            raise ConfigError(f"noise_variance must be >= 0; got {self.noise_variance}")
        if not 0 <= self.seed < SEED_MAX:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        low, high = (float(v) for v in self.amplitude_range)
        if not 0 < low <= high <= 1:
            raise ConfigError(f"amplitude_range must satisfy 0 < low <= high <= 1; got {(low, high)}")
        object.__setattr__(self, "amplitude_range", (low, high))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    def key(self) -> Tuple:
        """Identity of the spec without its seed."""
        return (self.n, self.k, self.m, self.noise_variance, self.amplitude_range)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["amplitude_range"] = list(self.amplitude_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        d = dict(d)
        if "amplitude_range" in d:
            d["amplitude_range"] = tuple(d["amplitude_range"])
        return cls(**d)


def generate_problem(spec: GeneratorSpec) -> Problem:
    """Draw a Gaussian instance; a pure function of ``spec``."""
    rng = np.random.default_rng(spec.seed)
    A = rng.standard_normal((spec.m, spec.n))
    truth = np.zeros(spec.n)
    support = rng.choice(spec.n, size=spec.k, replace=False)
    low, high = spec.amplitude_range
    mags = rng.uniform(low, high, size=spec.k)
    signs = rng.choice(np.array([-1.0, 1.0]), size=spec.k)
    truth[support] = mags * signs
    b = A @ truth
    if spec.noise_variance > 0:
        b = b + rng.standard_normal(spec.m) * math.sqrt(spec.noise_variance / spec.m)
    return Problem(A=A, b=b, truth=truth, noise_variance=spec.noise_variance)


def derive_seed(base_seed: int, spec: GeneratorSpec, round_index: int) -> int:
    """Stable 64-bit seed for one trial."""
    token = json.dumps(
        [int(base_seed), list(spec.key()), int(round_index)], sort_keys=True
    ).encode()
    return int.from_bytes(hashlib.blake2b(token, digest_size=8).digest(), "little")


def support_of(v, threshold: float = SUPPORT_THRESHOLD) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    peak = np.abs(v).max() if v.size else 0.0
    if peak == 0:
        return np.array([], dtype=int)
    return np.flatnonzero(np.abs(v) > threshold * peak)


def evaluate(problem: Problem, reconstruction) -> Dict[str, Any]:
    """Sparsity ratio against the truth, support match and residual."""
    if problem.truth is None:
        raise DegenerateInputError("evaluate needs a problem with a known truth")
    rec = np.asarray(reconstruction, dtype=float)
    if rec.shape != (problem.n,):
        raise DegenerateInputError(f"reconstruction has shape {rec.shape}, expected ({problem.n},)")
    s_hat = sparsity_ratio(rec) if np.any(rec) else 0.0
    s0 = sparsity_ratio(problem.truth) if np.any(problem.truth) else 0.0
    if s0 > 0:
        ratio = s_hat / s0
    else:
        ratio = 0.0 if s_hat == 0 else math.inf
    exact = np.array_equal(support_of(rec), np.flatnonzero(problem.truth))
    return {
        "s_hat": float(s_hat),
        "s0": float(s0),
        "s_hat_ratio": float(ratio),
        "support_exact": bool(exact),
        "final_residual": problem.residual(rec),
    }


@dataclass(frozen=True)
class MethodSpec:
    """A reconstruction method and its parameters."""

    name: str
    params: Any = None
    label: Optional[str] = None

    def __post_init__(self):
        if self.name not in ("sss", "cosamp", "least_squares"):
            raise ConfigError(f"unknown method {self.name!r}")
        if self.name == "sss" and self.params is None:
            object.__setattr__(self, "params", SolverConfig())
        if self.name == "sss" and not isinstance(self.params, SolverConfig):
            raise ConfigError("sss needs SolverConfig params")
        if self.name == "cosamp" and not isinstance(self.params, CosampConfig):
            raise ConfigError("cosamp needs CosampConfig params")
        if self.label is None:
            label = self.name
            if self.name == "cosamp":
                label = f"cosamp(k={self.params.k})"
            object.__setattr__(self, "label", label)

    def params_dict(self) -> dict:
        return {} if self.params is None else self.params.to_dict()


@dataclass
class ExperimentRecord:
    """Outcome of one method on one trial."""

    spec: GeneratorSpec
    round: int
    method: str
    label: str
    method_params: Dict[str, Any]
    s_hat_ratio: Optional[float] = None
    s_hat: Optional[float] = None
    s0: Optional[float] = None
    support_exact: bool = False
    final_residual: Optional[float] = None
    runtime_seconds: Optional[float] = None
    iterations: Optional[int] = None
    failed: bool = False
    failure_reason: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict)
    trace: Any = field(default=None, repr=False, compare=False)

    RUNTIME_FIELDS = ("runtime_seconds",)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "round": self.round,
            "method": self.method,
            "label": self.label,
            "method_params": self.method_params,
            "generator": GENERATOR_METADATA,
            "s_hat_ratio": self.s_hat_ratio,
            "s_hat": self.s_hat,
            "s0": self.s0,
            "support_exact": self.support_exact,
            "final_residual": self.final_residual,
            "runtime_seconds": self.runtime_seconds,
            "iterations": self.iterations,
            "failed": self.failed,
            "failure_reason": self.failure_reason,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentRecord":
        d = dict(d)
        d.pop("generator", None)
        d["spec"] = GeneratorSpec.from_dict(d["spec"])
        return cls(**d)


def _run_method(problem: Problem, method: MethodSpec):
    """Return ``(reconstruction, iterations, extra, trace)``."""
    extra: Dict[str, Any] = {}
    if method.name == "sss":
        result = solve(problem, method.params)
        c = result.c
        raw_ratio = None
        if np.any(c) and np.any(problem.truth):
            raw_ratio = sparsity_ratio(c) / sparsity_ratio(problem.truth)
        extra = {
            "stop_reason": result.stop_reason,
            "rho": result.rho,
            "debiased": result.debiased,
            "raw_s_hat_ratio": raw_ratio,
            "raw_residual": problem.residual(c),
        }
        return result.estimate, result.iterations, extra, result.trace
    if method.name == "cosamp":
        x, its = cosamp(problem, method.params)
        return x, its, extra, None
    return least_squares(problem.A, problem.b), 1, extra, None


def run_trial(spec: GeneratorSpec, round_index: int, methods: Sequence[MethodSpec],
              keep_traces: bool = False) -> List[ExperimentRecord]:
    """Generate one problem from ``spec`` and run every method on it."""
    records = []
    try:
        problem = generate_problem(spec)
    except Exception as exc:  # recorded, never raised
        return [
            ExperimentRecord(spec, round_index, m.name, m.label, m.params_dict(),
                             failed=True, failure_reason=f"generation: {exc!r}")
            for m in methods
        ]
    for method in methods:
        rec = ExperimentRecord(spec, round_index, method.name, method.label, method.params_dict())
        try:
            t0 = time.perf_counter()
            x, its, extra, trace = _run_method(problem, method)
            rec.runtime_seconds = time.perf_counter() - t0
            scores = evaluate(problem, x)
            rec.s_hat_ratio = scores["s_hat_ratio"]
            rec.s_hat = scores["s_hat"]
            rec.s0 = scores["s0"]
            rec.support_exact = scores["support_exact"]
            rec.final_residual = scores["final_residual"]
            rec.iterations = int(its)
            rec.extra = extra
            if keep_traces:
                rec.trace = trace
        except Exception as exc:
            rec.failed = True
            rec.failure_reason = repr(exc)
        records.append(rec)
    return records


def _trial_task(args):
    return run_trial(*args)


def run_grid(
    grid: Sequence[GeneratorSpec],
    methods: Sequence[MethodSpec],
    rounds: int = 50,
    base_seed: int = 0,
    jobs: int = 1,
    keep_traces: bool = False,
) -> List[ExperimentRecord]:
    """Run ``rounds`` trials per spec; every method sees the same problems.

    The seed stored in each spec of ``grid`` is ignored; trial seeds are
    derived from ``base_seed``, the spec and the round index.  Output order
    is (spec, round, method) regardless of ``jobs``.
    """
    if rounds < 1:
        raise ConfigError(f"rounds must be >= 1; got {rounds}")
    if not methods:
        raise ConfigError("no methods given")
    tasks = []
    for spec in grid:
        for r in range(rounds):
            seeded = GeneratorSpec(spec.n, spec.k, spec.m, spec.noise_variance,
                                   derive_seed(base_seed, spec, r), spec.amplitude_range)
            tasks.append((seeded, r, tuple(methods), keep_traces))
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        chunks = [_trial_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_trial_task, tasks))
    return [rec for chunk in chunks for rec in chunk]


def strip_runtime(record: dict) -> dict:
    return {k: v for k, v in record.items() if k not in ExperimentRecord.RUNTIME_FIELDS}


# -- aggregation --------------------------------------------------------------

SUMMARY_FIELDS = ("s_hat_ratio", "final_residual", "runtime_seconds", "iterations")
STATS = ("median", "q1", "q3", "min", "max")


def _stats(values: Sequence[float]) -> Dict[str, float]:
    v = np.asarray(values, dtype=float)
    q = lambda p: float(np.quantile(v, p, method="lower"))  # noqa: E731
    return {"median": q(0.5), "q1": q(0.25), "q3": q(0.75), "min": float(v.min()), "max": float(v.max())}


@dataclass
class SummaryTable:
    """Per (spec, method label) statistics; medians are lower medians."""

    rows: List[Dict[str, Any]]

    def columns(self) -> List[str]:
        cols = ["n", "k", "m", "noise_variance", "method", "label", "trials", "failures", "support_exact_rate"]
        for f in SUMMARY_FIELDS:
            cols += [f"{f}_{s}" for s in STATS]
        return cols

    def lookup(self, **match) -> List[Dict[str, Any]]:
        return [r for r in self.rows if all(r.get(k) == v for k, v in match.items())]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.columns(), lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in self.columns()})
        return buf.getvalue()


def summarize(records: Iterable[ExperimentRecord]) -> SummaryTable:
    """Group records by spec and method label and compute order statistics."""
    groups: Dict[Tuple, List[ExperimentRecord]] = {}
    for rec in records:
        groups.setdefault((rec.spec.key(), rec.label), []).append(rec)
    rows = []
    for (key, label), recs in groups.items():
        ok = [r for r in recs if not r.failed]
        n, k, m, noise, _ = key
        row: Dict[str, Any] = {
            "n": n, "k": k, "m": m, "noise_variance": noise,
            "method": recs[0].method, "label": label,
            "trials": len(recs), "failures": len(recs) - len(ok),
            "support_exact_rate": (sum(r.support_exact for r in ok) / len(ok)) if ok else None,
        }
        for f in SUMMARY_FIELDS:
            vals = [getattr(r, f) for r in ok if getattr(r, f) is not None]
            stats = _stats(vals) if vals else dict.fromkeys(STATS)
            for s in STATS:
                row[f"{f}_{s}"] = stats[s]
        rows.append(row)
    return SummaryTable(rows)


# -- persistence --------------------------------------------------------------


def atomic_write_text(path, text: str) -> Path:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def records_to_ndjson(records: Iterable[ExperimentRecord]) -> str:
    return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in records)


def write_records_ndjson(records: Iterable[ExperimentRecord], path) -> Path:
    return atomic_write_text(path, records_to_ndjson(records))


def read_records_ndjson(path) -> List[ExperimentRecord]:
    with open(path, encoding="utf-8") as fh:
        return [ExperimentRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def write_summary_csv(table: SummaryTable, path) -> Path:
    return atomic_write_text(path, table.to_csv())


def trace_to_csv(trace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(trace.CSV_COLUMNS)
    writer.writerows(trace.rows())
    return buf.getvalue()


def write_trace_csv(trace, path) -> Path:
    return atomic_write_text(path, trace_to_csv(trace))
