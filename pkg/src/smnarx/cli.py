"""Command-line front end: simulate, fit, evaluate, grid-search, study.

Every command writes its primary outputs plus a ``<output>.manifest.json``
recording the resolved configuration, seeds, input/output paths, tool
version, and wall-clock time, so any artifact can be regenerated exactly.
Primary outputs are byte-identical across runs with equal arguments and
seeds; manifests differ only in their timing fields.

Exit codes: 0 success, 1 computational failure (estimation or simulation
diverged), 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .basis import BasisConfig
from .dataset import TrajectoryDataset
from .estimator import VARIANTS, EstimationError, FitConfig, fit, grid_search_lambda
from .metrics import dump_mode_trace, evaluate, run_study
from .model import SmnarxModel, TrueSystem
from .simulate import benchmark_system, simulate, split_dataset

THREADS_ENV = "SMNARX_THREADS"

# Benchmark defaults: 3 modes, degree-3 dictionary on 4 output and 4 input
# lags, l1 weight 5e-4, threshold 0.05, 10 restarts.
BENCHMARK = {
    "modes": 3,
    "na": 4,
    "nb": 4,
    "nd": 3,
    "lam": 5e-4,
    "upsilon": 5e-2,
    "restarts": 10,
}


class UsageError(Exception):
    """Bad arguments, unreadable inputs, or unwritable outputs."""


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    if raw.strip():
        try:
            value = int(raw)
        except ValueError as exc:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
        if value < 1:
            raise UsageError(f"{THREADS_ENV} must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1

def _apply_threads(n: int) -> None:
    if n < 1:
        raise UsageError(f"--threads must be >= 1, got {n}")
    # BLAS pools read these at load or pool start; best effort at runtime.
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(n)
    except ImportError:
        pass


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(primary: Path, command: str, args_snapshot: dict, outputs: list[Path], elapsed: float) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": args_snapshot,
        "outputs": [
            {"path": str(p), "sha256": _sha256(p)} for p in outputs if p.exists()
        ],
        "elapsed_seconds": elapsed,
        "created_unix": time.time(),
    }
    Path(f"{primary}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_dataset(path: str) -> TrajectoryDataset:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"dataset file not found: {p}")
    try:
        return TrajectoryDataset.from_csv(p)
    except ValueError as exc:
        raise UsageError(f"cannot parse dataset {p}: {exc}") from exc


def _load_truth(path: str) -> TrueSystem:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"system file not found: {p}")
    try:
        return TrueSystem.load(p)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"invalid system JSON {p}: {exc}") from exc


def _load_model(path: str) -> SmnarxModel:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"model file not found: {p}")
    try:
        return SmnarxModel.load(p)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"invalid model JSON {p}: {exc}") from exc


def _parse_split(raw: str) -> tuple[int, int, int]:
    parts = raw.split(",")
    if len(parts) != 3:
        raise UsageError(f"--split needs train,validation,test counts, got {raw!r}")
    try:
        counts = tuple(int(v) for v in parts)
    except ValueError as exc:
        raise UsageError(f"--split counts must be integers, got {raw!r}") from exc
    return counts  # type: ignore[return-value]


def _resolve_system(args) -> TrueSystem:
    if args.benchmark and args.system:
        raise UsageError("--benchmark and --system are mutually exclusive")
    if args.benchmark:
        return benchmark_system()
    if args.system:
        return _load_truth(args.system)
    raise UsageError("one of --benchmark or --system is required")


def _maybe_split(dataset: TrajectoryDataset, args) -> TrajectoryDataset:
    if args.split is None:
        return dataset
    counts = _parse_split(args.split)
    try:
        return split_dataset(dataset, *counts, batch_len=args.batch_len)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _fit_config(args, q: int, record_path: bool = False) -> FitConfig:
    def pick(name):
        value = getattr(args, name)
        if value is None and args.benchmark_defaults and name in BENCHMARK:
            return BENCHMARK[name]
        return value

    modes = pick("modes")
    na, nb, nd = pick("na"), pick("nb"), pick("nd")
    lam, upsilon, restarts = pick("lam"), pick("upsilon"), pick("restarts")
    # The l1 weight is moot for plain EM and the threshold only acts in
    # the two-stage variant, so neither needs to be spelled out then.
    if lam is None and args.variant == "em":
        lam = 0.0
    if upsilon is None and args.variant != "em-l1-2s":
        upsilon = BENCHMARK["upsilon"]
    missing = [
        flag
        for flag, value in (
            ("--modes", modes), ("--na", na), ("--nb", nb), ("--nd", nd),
            ("--lambda", lam), ("--upsilon", upsilon), ("--restarts", restarts),
        )
        if value is None
    ]
    if missing:
        raise UsageError(
            "missing " + ", ".join(missing) + " (or pass --benchmark-defaults)"
        )
    try:
        basis = BasisConfig(n_a=na, n_b=nb, q=q, n_d=nd)
        return FitConfig(
            basis=basis,
            n_modes=modes,
            lam=lam,
            upsilon=upsilon,
            variant=args.variant,
            burn_in_tol=args.burn_in_tol,
            converge_tol=args.converge_tol,
            max_iters=args.max_iters,
            restarts=restarts,
            seed=args.seed,
            record_path=record_path,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _add_fit_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--benchmark-defaults", action="store_true",
                        help="fill unset model flags with the benchmark configuration")
    parser.add_argument("--modes", type=int, help="number of Markov modes")
    parser.add_argument("--na", type=int, help="output lags in the regressor")
    parser.add_argument("--nb", type=int, help="input lags in the regressor")
    parser.add_argument("--nd", type=int, help="maximum polynomial degree")
    parser.add_argument("--lambda", dest="lam", type=float, help="l1 weight")
    parser.add_argument("--upsilon", type=float, help="hard threshold (two-stage only)")
    parser.add_argument("--restarts", type=int, help="random EM restarts")
    parser.add_argument("--variant", choices=VARIANTS, default="em-l1-2s")
    parser.add_argument("--max-iters", type=int, default=100)
    parser.add_argument("--burn-in-tol", type=float, default=1e-2)
    parser.add_argument("--converge-tol", type=float, default=1e-6)
    parser.add_argument("--seed", type=int, default=0)


def _add_split_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--split", help="train,validation,test sample counts")
    parser.add_argument("--batch-len", type=int, default=200,
                        help="training mini-batch length used with --split")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smnarx",
        description="Identify switched Markov polynomial NARX models.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"worker thread cap (default: {THREADS_ENV} or all cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a trajectory from a system")
    p.add_argument("--benchmark", action="store_true", help="use the built-in benchmark system")
    p.add_argument("--system", help="system JSON path")
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--seed", type=int, default=0)
    _add_split_flags(p)
    p.add_argument("--out", required=True, help="dataset CSV path")
    p.add_argument("--truth-out", help="system JSON copy (default <out stem>.truth.json)")

    p = sub.add_parser("fit", help="estimate a model from a dataset")
    p.add_argument("dataset", help="dataset CSV with a train split")
    _add_split_flags(p)
    _add_fit_flags(p)
    p.add_argument("--model-out", required=True, help="fitted model JSON path")
    p.add_argument("--report-out", help="fit report JSON (default <model stem>.report.json)")
    p.add_argument("--coef-path-out", help="per-iteration coefficient CSV")

    p = sub.add_parser("evaluate", help="score a fitted model on a dataset")
    p.add_argument("model", help="model JSON path")
    p.add_argument("dataset", help="dataset CSV with a test split")
    p.add_argument("--truth", help="generating-system JSON for accuracy indexes")
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.add_argument("--mode-trace-out", help="per-sample mode CSV (test split)")

    p = sub.add_parser("grid-search", help="search the l1 weight on validation RMSE")
    p.add_argument("dataset", help="dataset CSV with train and validation splits")
    _add_split_flags(p)
    _add_fit_flags(p)
    p.add_argument("--window", default="1e-6,1e1", help="lo,hi bounds of the log-spaced grid")
    p.add_argument("--grid-size", type=int, default=8)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--lambdas", help="explicit comma-separated candidates (overrides --window)")
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--best-out", help="best-candidate JSON (default <out stem>.best.json)")

    p = sub.add_parser("study", help="repeat simulate-fit-evaluate cycles")
    p.add_argument("--benchmark", action="store_true", help="use the built-in benchmark system")
    p.add_argument("--system", help="system JSON path")
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--n", type=int, default=12000, help="samples per run")
    _add_split_flags(p)
    _add_fit_flags(p)
    p.add_argument("--out-dir", required=True, help="directory for study artifacts")
    return parser


def cmd_simulate(args) -> int:
    system = _resolve_system(args)
    if args.n < 1:
        raise UsageError(f"--n must be >= 1, got {args.n}")
    started = time.perf_counter()
    try:
        dataset = simulate(system, args.n, seed=args.seed)
    except OverflowError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 1
    dataset = _maybe_split(dataset, args)
    out = Path(args.out)
    truth_out = Path(args.truth_out) if args.truth_out else out.with_suffix(".truth.json")
    try:
        dataset.to_csv(out)
        system.save(truth_out)
    except OSError as exc:
        raise UsageError(f"cannot write output: {exc}") from exc
    _write_manifest(
        out,
        "simulate",
        {"system": args.system or "benchmark", "n": args.n, "seed": args.seed,
         "split": args.split, "batch_len": args.batch_len},
        [out, truth_out],
        time.perf_counter() - started,
    )
    print(f"wrote {dataset.n_samples} samples to {out}")
    return 0


def cmd_fit(args) -> int:
    dataset = _maybe_split(_load_dataset(args.dataset), args)
    config = _fit_config(args, dataset.q, record_path=args.coef_path_out is not None)
    started = time.perf_counter()
    report = fit(dataset, config)
    elapsed = time.perf_counter() - started
    model_out = Path(args.model_out)
    report_out = Path(args.report_out) if args.report_out else model_out.with_suffix(".report.json")
    try:
        report.model.save(model_out)
        report.save(report_out)
        if args.coef_path_out:
            report.coef_path_csv(args.coef_path_out)
    except OSError as exc:
        raise UsageError(f"cannot write output: {exc}") from exc
    outputs = [model_out, report_out] + ([Path(args.coef_path_out)] if args.coef_path_out else [])
    _write_manifest(
        model_out, "fit",
        {"dataset": args.dataset, "split": args.split, "batch_len": args.batch_len,
         "config": config.to_json()},
        outputs, elapsed,
    )
    print(
        f"fit ({config.variant}) restart {report.restart_index}: loglik {report.loglik:.4f}, "
        f"{report.n_iters} iterations, supports {report.support_sizes.tolist()}"
    )
    if report.collapsed:
        print(f"{len(report.collapsed)} restart(s) collapsed", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    model = _load_model(args.model)
    dataset = _load_dataset(args.dataset)
    truth = _load_truth(args.truth) if args.truth else None
    if truth is not None:
        if truth.n_modes != model.n_modes or truth.basis != model.basis:
            raise UsageError("model and truth disagree on mode count or basis")
    started = time.perf_counter()
    try:
        report = evaluate(model, dataset, truth)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    try:
        report.save(out)
        if args.mode_trace_out:
            dump_mode_trace(args.mode_trace_out, model, dataset, split="test", truth=truth)
    except OSError as exc:
        raise UsageError(f"cannot write output: {exc}") from exc
    outputs = [out] + ([Path(args.mode_trace_out)] if args.mode_trace_out else [])
    _write_manifest(
        out, "evaluate",
        {"model": args.model, "dataset": args.dataset, "truth": args.truth},
        outputs, time.perf_counter() - started,
    )
    parts = [f"rmse {report.rmse:.4f}"]
    for name in ("f_theta", "f_a", "f_s_train", "f_s_test"):
        value = getattr(report, name)
        if value is not None:
            parts.append(f"{name} {value:.4f}")
    print(", ".join(parts))
    return 0


def cmd_grid_search(args) -> int:
    dataset = _maybe_split(_load_dataset(args.dataset), args)
    if args.restarts is None:
        args.restarts = 1  # candidates default to a single restart
    config = _fit_config(args, dataset.q)
    if args.lambdas:
        try:
            lambdas = [float(v) for v in args.lambdas.split(",")]
        except ValueError as exc:
            raise UsageError(f"--lambdas must be comma-separated floats: {args.lambdas!r}") from exc
        window = (1e-6, 1e1)
    else:
        lambdas = None
        parts = args.window.split(",")
        if len(parts) != 2:
            raise UsageError(f"--window needs lo,hi floats, got {args.window!r}")
        try:
            window = (float(parts[0]), float(parts[1]))
        except ValueError as exc:
            raise UsageError(f"--window needs lo,hi floats, got {args.window!r}") from exc
        if not window[0] < window[1]:
            raise UsageError(f"--window lo must be < hi, got {args.window!r}")
    if args.grid_size < 1:
        raise UsageError(f"--grid-size must be >= 1, got {args.grid_size}")
    if args.patience < 1:
        raise UsageError(f"--patience must be >= 1, got {args.patience}")
    started = time.perf_counter()
    try:
        best_lam, table = grid_search_lambda(
            dataset, config,
            window=window, grid_size=args.grid_size, patience=args.patience,
            restarts=config.restarts, lambdas=lambdas,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    best_out = Path(args.best_out) if args.best_out else out.with_suffix(".best.json")
    try:
        with open(out, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["lambda", "validation_rmse", "loglik", "converged"])
            for point in table:
                writer.writerow(
                    [f"{point.lam:.17g}", f"{point.rmse:.17g}", f"{point.loglik:.17g}", point.converged]
                )
        best_out.write_text(json.dumps({"best_lambda": best_lam}, indent=2) + "\n")
    except OSError as exc:
        raise UsageError(f"cannot write output: {exc}") from exc
    _write_manifest(
        out, "grid-search",
        {"dataset": args.dataset, "split": args.split, "batch_len": args.batch_len,
         "config": config.to_json(), "window": list(window), "grid_size": args.grid_size,
         "patience": args.patience, "lambdas": lambdas},
        [out, best_out], time.perf_counter() - started,
    )
    print(f"best lambda {best_lam:g} over {len(table)} candidates")
    return 0


def cmd_study(args) -> int:
    system = _resolve_system(args)
    if args.runs < 1:
        raise UsageError(f"--runs must be >= 1, got {args.runs}")
    split = _parse_split(args.split) if args.split else (10000, 1000, 1000)
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory: {exc}") from exc

    config = _fit_config(args, system.basis.config.q)
    started = time.perf_counter()
    result = run_study(
        system, config, args.runs,
        n_samples=args.n, split=split, batch_len=args.batch_len, seed=args.seed,
    )
    elapsed = time.perf_counter() - started
    study_json = out_dir / "study.json"
    runs_csv = out_dir / "runs.csv"
    coeffs_csv = out_dir / "coefficients.csv"
    indexes_csv = out_dir / "indexes.csv"
    try:
        result.save(study_json)
        result.per_run_csv(runs_csv)
        if result.runs:
            result.coefficient_csv(coeffs_csv)
            result.index_csv(indexes_csv)
    except OSError as exc:
        raise UsageError(f"cannot write output: {exc}") from exc
    outputs = [study_json, runs_csv, coeffs_csv, indexes_csv]
    _write_manifest(
        study_json, "study",
        {"system": args.system or "benchmark", "runs": args.runs, "n": args.n,
         "split": list(split), "batch_len": args.batch_len, "seed": args.seed,
         "config": config.to_json()},
        outputs, elapsed,
    )
    print(
        f"{len(result.runs)} runs succeeded, {len(result.failures)} failed; "
        f"artifacts in {out_dir}"
    )
    if result.runs:
        for name, stats in result.index_stats.items():
            print(f"  {name}: median {stats['median']:.4f}")
        print(f"  exact support recovery: {result.exact_support_fraction:.0%}")
    if not result.runs:
        print("all study runs failed", file=sys.stderr)
        return 1
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "grid-search": cmd_grid_search,
    "study": cmd_study,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        threads = args.threads if args.threads is not None else _default_threads()
        _apply_threads(threads)
        return _COMMANDS[args.command](args)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EstimationError, FloatingPointError, OverflowError) as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
