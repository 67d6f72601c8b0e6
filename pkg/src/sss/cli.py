"""Command-line interface: ``sss solve | simulate | compare-cosamp``.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import charts
from .baselines import CosampConfig
from .errors import ConfigError, NumericalError, SSSError
from .harness import (
    GeneratorSpec,
    MethodSpec,
    atomic_write_text,
    records_to_ndjson,
    run_grid,
    summarize,
    trace_to_csv,
)
from .metrics import sparsity_ratio
from .problem import Problem
from .solver import SolverConfig, solve

log = logging.getLogger("sss")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


# -- input parsing --------------------------------------------------------------


def _parse_float(text: str, where: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise UsageError(f"{where}: not a number: {text.strip()!r}") from None
    if not math.isfinite(v):
        raise UsageError(f"{where}: non-finite value {text.strip()!r}")
    return v


def read_matrix_csv(path) -> np.ndarray:
    """Row-major CSV matrix without header."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh)]
    except OSError as exc:
        raise UsageError(f"cannot read matrix file {path}: {exc.strerror}") from None
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise UsageError(f"{path}: matrix file is empty")
    width = len(rows[0])
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise UsageError(f"{path}: row {i} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row, start=1):
            out[i - 1, j - 1] = _parse_float(cell, f"{path}: row {i}, column {j}")
    return out


def read_vector_file(path) -> np.ndarray:
    """One value per line."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read vector file {path}: {exc.strerror}") from None
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise UsageError(f"{path}: vector file is empty")
    return np.array([_parse_float(v, f"{path}: row {i}") for i, v in enumerate(lines, start=1)])


def load_config_document(path) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config document must be a JSON object")
    return doc


# -- config resolution -------------------------------------------------------------

_SOLVER_FLAGS = {
    "eta_start": "eta_start",
    "eta_end": "eta_end",
    "epsilon": "epsilon",
    "c_mode": "c_mode",
    "stop": "stop",
    "max_iters": "max_iterations",
    "debias": "debias",
}


def resolve_solver_config(args, doc: Dict[str, Any]) -> SolverConfig:
    settings = dict(doc.get("solver", {}))
    for flag, name in _SOLVER_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            settings[name] = value
    unknown = set(settings) - set(SolverConfig.__dataclass_fields__)
    if unknown:
        raise UsageError(f"unknown solver settings: {', '.join(sorted(unknown))}")
    try:
        return SolverConfig(**settings)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    except TypeError as exc:
        raise UsageError(f"invalid solver settings: {exc}") from None


def resolve_seed(args, doc) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    if "seed" in doc:
        return int(doc["seed"])
    env = os.environ.get("SSS_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"SSS_SEED must be an integer; got {env!r}") from None
    return 0


def _pick(args, doc, name, default):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return doc.get(name, default)


def _grid_from_doc(doc) -> List[GeneratorSpec]:
    def as_list(v):
        return v if isinstance(v, list) else [v]

    try:
        if "specs" in doc:
            return [GeneratorSpec.from_dict(s) for s in doc["specs"]]
        g = doc.get("grid")
        if g is None:
            raise UsageError("config needs a 'grid' or 'specs' entry")
        specs = []
        for n in as_list(g["n"]):
            for k in as_list(g["k"]):
                for m in as_list(g["m"]):
                    for nv in as_list(g.get("noise_variance", 0.0)):
                        specs.append(GeneratorSpec(n=n, k=k, m=m, noise_variance=nv,
                                                   amplitude_range=tuple(g.get("amplitude_range", (0.5, 1.0)))))
        return specs
    except KeyError as exc:
        raise UsageError(f"grid entry missing key {exc}") from None
    except (ConfigError, TypeError) as exc:
        raise UsageError(f"invalid grid: {exc}") from None


def _cosamp_config(k, doc, noise_variance) -> CosampConfig:
    settings = dict(doc.get("cosamp", {}))
    settings.pop("k", None)
    if "residual_tolerance" not in settings:
        settings["residual_tolerance"] = math.sqrt(noise_variance) if noise_variance > 0 else 1e-6
    try:
        return CosampConfig(k=k, **settings)
    except (ConfigError, TypeError) as exc:
        raise UsageError(f"invalid cosamp settings: {exc}") from None


def _methods_from_doc(doc, solver_config, noise_variance) -> List[MethodSpec]:
    methods = []
    for entry in doc.get("methods", ["sss"]):
        if isinstance(entry, str):
            entry = {"name": entry}
        name = entry.get("name")
        if name == "sss":
            methods.append(MethodSpec("sss", solver_config))
        elif name == "cosamp":
            if "k" not in entry:
                raise UsageError("cosamp method needs 'k'")
            methods.append(MethodSpec("cosamp", _cosamp_config(entry["k"], doc, noise_variance)))
        elif name == "least_squares":
            methods.append(MethodSpec("least_squares"))
        else:
            raise UsageError(f"unknown method {name!r}")
    if not methods:
        raise UsageError("no methods configured")
    return methods


# -- subcommands ------------------------------------------------------------------


def cmd_solve(args) -> int:
    doc = load_config_document(args.config)
    config = resolve_solver_config(args, doc)
    A = read_matrix_csv(args.matrix_file)
    b = read_vector_file(args.vector_file)
    if b.shape[0] != A.shape[0]:
        raise UsageError(f"{args.vector_file}: has {b.shape[0]} rows but the matrix has {A.shape[0]}")
    sigma2 = _pick(args, doc, "sigma2", None)
    if config.stop == "residual_below_sigma" and sigma2 is None:
        raise UsageError("--stop sigma requires --sigma2")
    if sigma2 is not None and not sigma2 >= 0:
        raise UsageError("--sigma2 must be >= 0")
    try:
        problem = Problem(A=A, b=b, noise_variance=sigma2)
    except SSSError as exc:
        raise UsageError(str(exc)) from None
    out = Path(_pick(args, doc, "out", "sss-out"))

    result = solve(problem, config)
    x = result.estimate
    atomic_write_text(out / "reconstruction.txt", "".join(f"{float(v)!r}\n" for v in x))
    atomic_write_text(out / "trace.csv", trace_to_csv(result.trace))
    atomic_write_text(out / "run.json", json.dumps({
        "solver": config.to_dict(),
        "sigma2": sigma2,
        "iterations": result.iterations,
        "stop_reason": result.stop_reason,
        "debiased": result.debiased,
    }, indent=2, sort_keys=True) + "\n")

    rhos = result.trace.column("rho")
    s_hat = sparsity_ratio(x) if np.any(x) else 0.0
    print(f"iterations: {result.iterations} ({result.stop_reason})")
    print(f"final residual ||Ax-b||: {problem.residual(x):.6g}")
    if rhos.size:
        print(f"rho: first {int(rhos[0])}, min {int(rhos.min())}, max {int(rhos.max())}, final {int(rhos[-1])}")
    print(f"support size: {int(np.count_nonzero(x))}, s_hat: {s_hat:.6g}")
    print(f"wrote {out}")
    return EXIT_OK


def _write_experiment(out: Path, records, resolved: Dict[str, Any], summary_name: str) -> None:
    atomic_write_text(out / "records.ndjson", records_to_ndjson(records))
    atomic_write_text(out / summary_name, summarize(records).to_csv())
    atomic_write_text(out / "config.resolved.json", json.dumps(resolved, indent=2, sort_keys=True) + "\n")


def cmd_simulate(args) -> int:
    doc = load_config_document(args.config)
    config = resolve_solver_config(args, doc)
    grid = _grid_from_doc(doc)
    if not grid:
        raise UsageError("grid is empty")
    rounds = int(_pick(args, doc, "rounds", 50))
    if rounds < 1:
        raise UsageError("rounds must be >= 1")
    seed = resolve_seed(args, doc)
    jobs = int(_pick(args, doc, "jobs", os.cpu_count() or 1))
    out = Path(_pick(args, doc, "out", "sss-out"))
    methods = _methods_from_doc(doc, config, grid[0].noise_variance)
    write_traces = bool(_pick(args, doc, "traces", False))

    records = run_grid(grid, methods, rounds=rounds, base_seed=seed, jobs=jobs, keep_traces=True)
    resolved = {
        "grid": [s.to_dict() for s in grid],
        "rounds": rounds,
        "seed": seed,
        "methods": [{"name": m.name, "label": m.label, "params": m.params_dict()} for m in methods],
    }
    _write_experiment(out, records, resolved, "summary.csv")
    atomic_write_text(out / "ratio_by_m.svg", charts.ratio_by_m_chart(records))
    traced = [r for r in records if r.trace is not None]
    if traced:
        atomic_write_text(out / "residual.svg", charts.residual_chart(traced[0].trace))
    if write_traces:
        for r in traced:
            s = r.spec
            name = f"trace_n{s.n}_k{s.k}_m{s.m}_r{r.round}.csv"
            atomic_write_text(out / "traces" / name, trace_to_csv(r.trace))
    failures = sum(r.failed for r in records)
    print(f"{len(records)} records ({failures} failed) written to {out}")
    return EXIT_OK


def cmd_compare_cosamp(args) -> int:
    doc = load_config_document(args.config)
    config = resolve_solver_config(args, doc)
    sweep = doc.get("k_sweep")
    if args.k_sweep is not None:
        sweep = args.k_sweep
    if not sweep:
        raise UsageError("k_sweep must list at least one CoSaMP sparsity value")
    grid = _grid_from_doc(doc)
    if len(grid) != 1:
        raise UsageError("compare-cosamp takes exactly one problem spec")
    spec = grid[0]
    rounds = int(_pick(args, doc, "rounds", 50))
    if rounds < 1:
        raise UsageError("rounds must be >= 1")
    seed = resolve_seed(args, doc)
    jobs = int(_pick(args, doc, "jobs", os.cpu_count() or 1))
    out = Path(_pick(args, doc, "out", "sss-out"))
    methods = [MethodSpec("cosamp", _cosamp_config(int(k), doc, spec.noise_variance)) for k in sweep]
    methods.append(MethodSpec("sss", config))

    records = run_grid(grid, methods, rounds=rounds, base_seed=seed, jobs=jobs)
    resolved = {
        "spec": spec.to_dict(),
        "k_sweep": [int(k) for k in sweep],
        "rounds": rounds,
        "seed": seed,
        "methods": [{"name": m.name, "label": m.label, "params": m.params_dict()} for m in methods],
    }
    _write_experiment(out, records, resolved, "comparison.csv")
    atomic_write_text(out / "comparison.svg", charts.comparison_chart(records))
    table = summarize(records)
    for row in table.rows:
        print(f"{row['label']:>16}: median s_hat/s0 {row['s_hat_ratio_median']:.4g}, "
              f"median ||Ax-b|| {row['final_residual_median']:.4g}, "
              f"median runtime {row['runtime_seconds_median']:.3g}s")
    return EXIT_OK


# -- argument parser -----------------------------------------------------------------


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _add_solver_flags(p):
    g = p.add_argument_group("solver")
    g.add_argument("--eta-start", type=float, help="initial coupling weight (> 0)")
    g.add_argument("--eta-end", type=float, help="final coupling weight")
    g.add_argument("--epsilon", type=float, help="multiplicative growth of eta per iteration")
    g.add_argument("--c-mode", choices=["per-component", "hypersphere"])
    g.add_argument("--stop", choices=["schedule", "sigma"])
    g.add_argument("--max-iters", type=_positive_int)
    g.add_argument("--debias", action=argparse.BooleanOptionalAction, default=None,
                   help="refit by least squares on the final support")


def _add_run_flags(p):
    p.add_argument("--seed", type=int, help="base seed (default: config, then $SSS_SEED, then 0)")
    p.add_argument("--rounds", type=_positive_int)
    p.add_argument("--jobs", type=_positive_int, help="worker processes (default: CPU count)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sss", description="Solve-Select-Scale sparse recovery")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="recover x from a CSV matrix and vector")
    p.add_argument("matrix_file")
    p.add_argument("vector_file")
    p.add_argument("--sigma2", type=float, help="residual bound for --stop sigma")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="JSON config document")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="Monte-Carlo grid over random instances")
    p.add_argument("--config", required=True, help="JSON config document")
    p.add_argument("--out", help="output directory")
    p.add_argument("--traces", action="store_true", default=None, help="write per-trial trace CSVs")
    _add_solver_flags(p)
    _add_run_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare-cosamp", help="CoSaMP k sweep against SSS on shared problems")
    p.add_argument("--config", required=True, help="JSON config document")
    p.add_argument("--out", help="output directory")
    p.add_argument("--k-sweep", type=lambda s: [int(v) for v in s.split(",") if v.strip()],
                   help="comma separated CoSaMP k values")
    _add_solver_flags(p)
    _add_run_flags(p)
    p.set_defaults(func=cmd_compare_cosamp)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SSSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
