"""Fit-quality indexes, mode matching, and repeated-run studies.

Estimated mode labels are arbitrary, so every index that compares an
estimate against the generating system first aligns the labels with
:func:`match_modes` (exhaustive assignment on the coefficient rows).
Mode-sequence accuracy is measured with smoothed posteriors on training
data and with the causal filter on test data, because smoothing needs
future samples that a deployed predictor would not have.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from itertools import permutations
from pathlib import Path

import numpy as np

from ._rng import subseed
from .basis import DesignMatrix, build_design_matrix
from .dataset import TrajectoryDataset
from .estimator import EstimationError, FitConfig, fit
from .inference import filter_sequence, forward_backward
from .model import SmnarxModel, TrueSystem
from .simulate import simulate, split_dataset

# Exhaustive assignment is factorial in the mode count; eight modes
# (40320 candidates) is the largest size worth brute-forcing.
MAX_MATCH_MODES = 8


def rmse(predictions: np.ndarray, targets: np.ndarray) -> float:
    """Root-mean-square error between aligned sample vectors."""
    predictions = np.asarray(predictions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if predictions.shape != targets.shape:
        raise ValueError(
            f"length mismatch: {predictions.shape} predictions vs {targets.shape} targets"
        )
    return float(np.sqrt(np.mean((predictions - targets) ** 2)))


def match_modes(estimated: SmnarxModel, truth: TrueSystem | SmnarxModel) -> tuple[int, ...]:
    """Assign estimated modes to true modes by coefficient-row distance.

    Returns the 1-based permutation ``perm`` minimizing the summed
    Euclidean distance between true row ``s`` and estimated row
    ``perm[s] - 1``, found by exhaustive search over all assignments.

    Raises
    ------
    ValueError
        If the mode counts or bases differ, or the mode count exceeds
        the exhaustive-search bound of 8.
    """
    if estimated.n_modes != truth.n_modes:
        raise ValueError(
            f"mode count mismatch: estimate has {estimated.n_modes}, truth has {truth.n_modes}"
        )
    if estimated.basis != truth.basis:
        raise ValueError("basis mismatch between estimate and truth")
    n_modes = truth.n_modes
    if n_modes > MAX_MATCH_MODES:
        raise ValueError(f"exhaustive mode matching supports at most {MAX_MATCH_MODES} modes")
    dist = np.linalg.norm(truth.theta[:, None, :] - estimated.theta[None, :, :], axis=2)
    best = min(permutations(range(n_modes)), key=lambda p: sum(dist[s, p[s]] for s in range(n_modes)))
    return tuple(int(i) + 1 for i in best)


def apply_permutation(model: SmnarxModel, permutation: tuple[int, ...]) -> SmnarxModel:
    """Relabel modes so row ``s`` holds the submodel matched to true mode ``s``."""
    idx = np.asarray(permutation, dtype=np.int64) - 1
    if sorted(idx.tolist()) != list(range(model.n_modes)):
        raise ValueError(f"not a permutation of 1..{model.n_modes}: {permutation}")
    return SmnarxModel(
        basis=model.basis,
        theta=model.theta[idx].copy(),
        sigma2=model.sigma2,
        transition=model.transition[np.ix_(idx, idx)].copy(),
        initial=model.initial[idx].copy(),
    )


def f_theta(estimated_theta: np.ndarray, true_theta: np.ndarray) -> float:
    """Mean per-mode coefficient accuracy, 1 at a perfect estimate.

    Computes ``(1/S) sum_s (1 - ||theta_s - est_s|| / ||theta_s||)`` over
    full-length coefficient vectors; modes must already be aligned.
    """
    estimated_theta = np.asarray(estimated_theta, dtype=float)
    true_theta = np.asarray(true_theta, dtype=float)
    if estimated_theta.shape != true_theta.shape:
        raise ValueError(
            f"shape mismatch: {estimated_theta.shape} estimate vs {true_theta.shape} truth"
        )
    norms = np.linalg.norm(true_theta, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("true coefficient matrix has an all-zero mode row")
    errors = np.linalg.norm(estimated_theta - true_theta, axis=1)
    return float(np.mean(1.0 - errors / norms))


def f_a(estimated_transition: np.ndarray, true_transition: np.ndarray) -> float:
    """Transition-matrix accuracy ``1 - ||A_est - A||_F / ||A||_F``; modes aligned."""
    estimated_transition = np.asarray(estimated_transition, dtype=float)
    true_transition = np.asarray(true_transition, dtype=float)
    if estimated_transition.shape != true_transition.shape:
        raise ValueError(
            f"shape mismatch: {estimated_transition.shape} estimate vs "
            f"{true_transition.shape} truth"
        )
    return float(
        1.0 - np.linalg.norm(estimated_transition - true_transition) / np.linalg.norm(true_transition)
    )


def f_s(inferred_modes: np.ndarray, true_modes: np.ndarray) -> float:
    """Fraction of samples whose inferred mode label equals the true label."""
    inferred_modes = np.asarray(inferred_modes)
    true_modes = np.asarray(true_modes)
    if inferred_modes.shape != true_modes.shape:
        raise ValueError(
            f"length mismatch: {inferred_modes.shape} inferred vs {true_modes.shape} true"
        )
    return float(np.mean(inferred_modes == true_modes))


@dataclass
class EvaluationReport:
    """Quality indexes of one fitted model, label-aligned when truth is known.

    ``permutation`` maps true mode ``s`` to estimated row ``permutation[s-1]``
    (1-based); ``theta``, ``transition``, ``initial`` and the per-mode counts
    are stored in true-mode order when a truth is supplied, estimator order
    otherwise.  ``n_feat`` counts numerically nonzero coefficients per mode
    while ``n_available`` is the full dictionary size, so both readings of
    model complexity stay visible.  Truth-dependent indexes are None when no
    generating system was given.
    """

    rmse: float
    n_feat: np.ndarray
    n_available: int
    sigma2: float
    theta: np.ndarray
    transition: np.ndarray
    initial: np.ndarray
    f_theta: float | None = None
    f_a: float | None = None
    f_s_train: float | None = None
    f_s_test: float | None = None
    permutation: tuple[int, ...] | None = None
    exact_support: bool | None = None

    def __post_init__(self) -> None:
        for name in ("f_s_train", "f_s_test"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} outside [0, 1]: {value}")
        if self.permutation is not None:
            size = len(self.initial)
            if sorted(self.permutation) != list(range(1, size + 1)):
                raise ValueError(f"not a permutation of 1..{size}: {self.permutation}")

    def to_json(self) -> dict:
        return {
            "rmse": self.rmse,
            "f_theta": self.f_theta,
            "f_a": self.f_a,
            "f_s_train": self.f_s_train,
            "f_s_test": self.f_s_test,
            "n_feat": [int(v) for v in self.n_feat],
            "n_available": self.n_available,
            "sigma2": self.sigma2,
            "permutation": list(self.permutation) if self.permutation is not None else None,
            "exact_support": self.exact_support,
            "theta": [
                {"indices": np.flatnonzero(row).tolist(), "values": row[row != 0.0].tolist()}
                for row in self.theta
            ],
            "transition": self.transition.tolist(),
            "initial": self.initial.tolist(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


def _true_mode_rows(design: DesignMatrix, segments) -> np.ndarray:
    labels = np.empty(design.n_rows, dtype=np.int64)
    for i, seg in enumerate(segments):
        rows = design.segment_slices[i]
        labels[rows] = seg.true_modes[design.row_sample[rows]]
    return labels


def _smoothed_modes(model: SmnarxModel, design: DesignMatrix) -> np.ndarray:
    modes = np.empty(design.n_rows, dtype=np.int64)
    for i, sl in enumerate(design.segment_slices):
        posterior = forward_backward(model, design.segment_phi(i), design.segment_targets(i))
        modes[sl] = np.argmax(posterior.gamma, axis=1) + 1
    return modes


def _filtered(model: SmnarxModel, design: DesignMatrix) -> tuple[np.ndarray, np.ndarray]:
    modes = np.empty(design.n_rows, dtype=np.int64)
    yhat = np.empty(design.n_rows)
    for i, sl in enumerate(design.segment_slices):
        result = filter_sequence(model, design.segment_phi(i), design.segment_targets(i))
        modes[sl] = result.modes
        yhat[sl] = result.yhat
    return modes, yhat


def evaluate(
    model: SmnarxModel,
    dataset: TrajectoryDataset,
    truth: TrueSystem | SmnarxModel | None = None,
) -> EvaluationReport:
    """Score a fitted model on a dataset, against the truth when given.

    The test split is scored with the causal one-step filter (RMSE and
    mode accuracy); the train split is scored with smoothed posteriors.
    With a truth, modes are matched first and all stored parameters are
    reported in true-mode order.
    """
    test_design = build_design_matrix(model.basis, dataset, split="test")
    test_modes, test_yhat = _filtered(model, test_design)
    rmse_test = rmse(test_yhat, test_design.targets)

    if truth is None:
        return EvaluationReport(
            rmse=rmse_test,
            n_feat=model.support_sizes(),
            n_available=model.basis.n,
            sigma2=model.sigma2,
            theta=model.theta.copy(),
            transition=model.transition.copy(),
            initial=model.initial.copy(),
        )

    permutation = match_modes(model, truth)
    aligned = apply_permutation(model, permutation)
    true_theta = truth.theta
    true_supports = [set(np.flatnonzero(row).tolist()) for row in true_theta]
    est_supports = [set(np.flatnonzero(row).tolist()) for row in aligned.theta]

    # Relabel filtered test modes into true-mode labels: estimated row
    # permutation[s]-1 plays true mode s+1.
    to_true = np.empty(model.n_modes, dtype=np.int64)
    for true_mode, est_mode in enumerate(permutation, start=1):
        to_true[est_mode - 1] = true_mode

    f_s_train = None
    train_design = build_design_matrix(model.basis, dataset, split="train")
    if dataset.has_true_modes:
        train_true = _true_mode_rows(train_design, dataset.segments_for("train"))
        train_modes = _smoothed_modes(model, train_design)
        f_s_train = f_s(to_true[train_modes - 1], train_true)

    f_s_test = None
    if dataset.has_true_modes:
        test_true = _true_mode_rows(test_design, dataset.segments_for("test"))
        f_s_test = f_s(to_true[test_modes - 1], test_true)

    return EvaluationReport(
        rmse=rmse_test,
        n_feat=aligned.support_sizes(),
        n_available=model.basis.n,
        sigma2=model.sigma2,
        theta=aligned.theta,
        transition=aligned.transition,
        initial=aligned.initial,
        f_theta=f_theta(aligned.theta, true_theta),
        f_a=f_a(aligned.transition, truth.transition),
        f_s_train=f_s_train,
        f_s_test=f_s_test,
        permutation=permutation,
        exact_support=est_supports == true_supports,
    )


def dump_mode_trace(
    path: str | Path,
    model: SmnarxModel,
    dataset: TrajectoryDataset,
    split: str = "test",
    truth: TrueSystem | SmnarxModel | None = None,
) -> None:
    """Write a per-sample CSV of true vs causally predicted mode labels.

    Columns: ``k`` (absolute sample index), ``segment``, ``true_mode``
    (empty when unknown), ``predicted_mode``.  With a truth the predicted
    labels are relabeled into true-mode order.
    """
    design = build_design_matrix(model.basis, dataset, split=split)
    segments = dataset.segments_for(split)
    modes, _ = _filtered(model, design)
    if truth is not None:
        permutation = match_modes(model, truth)
        to_true = np.empty(model.n_modes, dtype=np.int64)
        for true_mode, est_mode in enumerate(permutation, start=1):
            to_true[est_mode - 1] = true_mode
        modes = to_true[modes - 1]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["k", "segment", "true_mode", "predicted_mode"])
        for r in range(design.n_rows):
            seg = segments[design.row_segment[r]]
            sample = int(design.row_sample[r])
            true_label = "" if seg.true_modes is None else int(seg.true_modes[sample])
            writer.writerow([seg.start + sample, int(design.row_segment[r]), true_label, int(modes[r])])


@dataclass
class StudyRun:
    """One simulate-fit-evaluate cycle inside a repeated study."""

    index: int
    sim_seed: int
    fit_seed: int
    loglik: float
    n_iters: int
    converged: bool
    restart_index: int
    elapsed: float
    evaluation: EvaluationReport

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "sim_seed": self.sim_seed,
            "fit_seed": self.fit_seed,
            "loglik": self.loglik,
            "n_iters": self.n_iters,
            "converged": self.converged,
            "restart_index": self.restart_index,
            "elapsed": self.elapsed,
            "evaluation": self.evaluation.to_json(),
        }


@dataclass
class StudyResult:
    """Per-run records plus aggregate parameter and index statistics.

    Aggregates cover successful runs only; ``mean_theta``/``std_theta``
    are elementwise over true-mode-aligned coefficient matrices, and
    ``index_stats`` maps each quality index to mean/std/median over runs.
    """

    truth: TrueSystem
    config: FitConfig
    runs: list[StudyRun]
    failures: list[dict] = field(default_factory=list)

    @property
    def n_runs(self) -> int:
        return len(self.runs) + len(self.failures)

    def _stack(self, getter) -> np.ndarray:
        return np.array([getter(run) for run in self.runs])

    @property
    def mean_theta(self) -> np.ndarray:
        return self._stack(lambda r: r.evaluation.theta).mean(axis=0)

    @property
    def std_theta(self) -> np.ndarray:
        return self._stack(lambda r: r.evaluation.theta).std(axis=0)

    @property
    def mean_sigma2(self) -> float:
        return float(self._stack(lambda r: r.evaluation.sigma2).mean())

    @property
    def std_sigma2(self) -> float:
        return float(self._stack(lambda r: r.evaluation.sigma2).std())

    @property
    def exact_support_fraction(self) -> float:
        return float(np.mean([bool(r.evaluation.exact_support) for r in self.runs]))

    @property
    def index_stats(self) -> dict[str, dict[str, float]]:
        stats: dict[str, dict[str, float]] = {}
        for name in ("rmse", "f_theta", "f_a", "f_s_train", "f_s_test"):
            values = [getattr(run.evaluation, name) for run in self.runs]
            if any(v is None for v in values):
                continue
            arr = np.array(values, dtype=float)
            stats[name] = {
                "mean": float(arr.mean()),
                "std": float(arr.std()),
                "median": float(np.median(arr)),
            }
        return stats

    def to_json(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "n_failures": len(self.failures),
            "failures": self.failures,
            "exact_support_fraction": self.exact_support_fraction,
            "mean_sigma2": self.mean_sigma2,
            "std_sigma2": self.std_sigma2,
            "index_stats": self.index_stats,
            "runs": [run.to_json() for run in self.runs],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    def per_run_csv(self, path: str | Path) -> None:
        """One row per successful run with every scalar index."""
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                [
                    "run", "sim_seed", "fit_seed", "loglik", "n_iters", "converged",
                    "restart", "elapsed", "rmse", "f_theta", "f_a", "f_s_train",
                    "f_s_test", "sigma2", "exact_support", "n_feat",
                ]
            )
            for run in self.runs:
                ev = run.evaluation
                writer.writerow(
                    [
                        run.index, run.sim_seed, run.fit_seed,
                        _fmt(run.loglik), run.n_iters, run.converged,
                        run.restart_index, f"{run.elapsed:.3f}", _fmt(ev.rmse),
                        _fmt(ev.f_theta), _fmt(ev.f_a), _fmt(ev.f_s_train),
                        _fmt(ev.f_s_test), _fmt(ev.sigma2), ev.exact_support,
                        " ".join(str(int(v)) for v in ev.n_feat),
                    ]
                )

    def coefficient_csv(self, path: str | Path) -> None:
        """Mean/std per true-support coefficient plus the noise variance."""
        labels = _term_labels(self.truth)
        mean = self.mean_theta
        std = self.std_theta
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["mode", "term", "label", "true_value", "mean", "std"])
            for s, row in enumerate(self.truth.theta):
                for j in np.flatnonzero(row):
                    writer.writerow(
                        [s + 1, int(j), labels[int(j)], _fmt(row[j]), _fmt(mean[s, j]), _fmt(std[s, j])]
                    )
            writer.writerow(
                ["", "", "sigma2", _fmt(self.truth.noise_std**2), _fmt(self.mean_sigma2), _fmt(self.std_sigma2)]
            )

    def index_csv(self, path: str | Path) -> None:
        """Mean/std/median per quality index, plus the support-recovery rate."""
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["index", "mean", "std", "median"])
            for name, stats in self.index_stats.items():
                writer.writerow([name, _fmt(stats["mean"]), _fmt(stats["std"]), _fmt(stats["median"])])
            writer.writerow(["exact_support_fraction", _fmt(self.exact_support_fraction), "", ""])


def _fmt(value) -> str:
    if value is None:
        return ""
    return f"{float(value):.17g}"


def _term_labels(truth: TrueSystem) -> list[str]:
    return [truth.basis.term_label(i) for i in range(truth.basis.n)]


def run_study(
    truth: TrueSystem,
    config: FitConfig,
    n_runs: int,
    n_samples: int = 12000,
    split: tuple[int, int, int] = (10000, 1000, 1000),
    batch_len: int = 200,
    seed: int = 0,
) -> StudyResult:
    """Repeat simulate-fit-evaluate cycles with per-run seed substreams.

    Run ``i`` simulates with substream ``run-{i}-sim`` of ``seed`` and fits
    with substream ``run-{i}-fit``, so any single run can be reproduced
    without executing the others.  Failed runs (every restart collapsed)
    are recorded in ``failures`` and excluded from aggregates.
    """
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    if config.basis != truth.basis.config or config.n_modes != truth.n_modes:
        raise ValueError(
            "study aggregation needs the fitting basis and mode count to match the system"
        )
    runs: list[StudyRun] = []
    failures: list[dict] = []
    for i in range(n_runs):
        sim_seed = subseed(seed, f"run-{i}-sim")
        fit_seed = subseed(seed, f"run-{i}-fit")
        started = time.perf_counter()
        # A run can die in simulation (guarded divergence of the cubic
        # dynamics) or in estimation (every restart starved); both count
        # as recorded failures, not study aborts.
        try:
            raw = simulate(truth, n_samples, seed=sim_seed)
            dataset = split_dataset(raw, *split, batch_len=batch_len)
            report = fit(dataset, replace(config, seed=fit_seed))
        except (EstimationError, OverflowError, FloatingPointError) as exc:
            failures.append({"run": i, "sim_seed": sim_seed, "fit_seed": fit_seed, "error": str(exc)})
            continue
        evaluation = evaluate(report.model, dataset, truth)
        runs.append(
            StudyRun(
                index=i,
                sim_seed=sim_seed,
                fit_seed=fit_seed,
                loglik=report.loglik,
                n_iters=report.n_iters,
                converged=report.converged,
                restart_index=report.restart_index,
                elapsed=time.perf_counter() - started,
                evaluation=evaluation,
            )
        )
    return StudyResult(truth=truth, config=config, runs=runs, failures=failures)
