"""EM estimation of switched polynomial NARX models.

Each iteration alternates an E-step (scaled forward/backward over every
training segment, each restarting from the initial distribution) with an
M-step that updates, in order, the per-mode coefficients (weighted
regression, warm-started), the shared noise variance, and the
transition/initial distributions.

Training runs in two phases.  During burn-in every mode solves with the
l1 penalty (scaled per mode as 2 * lam * sum_k gamma_k^s); once the
per-iteration log-likelihood improvement falls below ``burn_in_tol`` the
two-stage variant additionally hard-thresholds each coefficient vector
after its solve and freezes the eliminated coordinates at zero, so
supports shrink monotonically.  A mode whose support has been frozen is
refit without the penalty (selection already happened; the unpenalized
solve removes the shrinkage bias).  The run stops when the improvement
magnitude drops below ``converge_tol`` (two-stage: and the supports were
unchanged by the last M-step) or at ``max_iters``.

Multiple restarts draw fresh responsibilities from named substreams of the
master seed; the restart with the highest final training log-likelihood
wins.  A restart where some mode's total responsibility collapses is
abandoned and recorded.

Variants
--------
em        plain EM, no penalty (lam forced to 0), no thresholding
em-l1     l1 penalty only
em-l1-2s  l1 penalty plus the hard-threshold stage (default)
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._rng import substream
from .basis import BasisConfig, DesignMatrix, build_design_matrix, enumerate_basis
from .dataset import TrajectoryDataset
from .inference import PosteriorSet, emission_matrix, filter_sequence
from .model import SmnarxModel, uniform_initial, uniform_transition
from .solver import (
    SolverSettings,
    WeightedRegressionProblem,
    hard_threshold,
    solve_weighted_lasso,
    support_of,
)

from . import _backend

__all__ = [
    "VARIANTS",
    "FitConfig",
    "IterationRecord",
    "FitReport",
    "EstimationError",
    "initialize",
    "m_step_transitions",
    "m_step_variance",
    "fit",
    "grid_search_lambda",
    "GridPoint",
]

VARIANTS = ("em", "em-l1", "em-l1-2s")
STARVATION_FRACTION = 1e-6
POSTERIOR_TOL = 1e-9


@dataclass(frozen=True)
class FitConfig:
    """Everything the EM loop needs besides the data.

    Parameters
    ----------
    basis : BasisConfig
        Lag/degree structure of the regressor dictionary (assumed known).
    n_modes : int
        Number of modes S.
    lam : float
        l1 weight; lives on the per-unit-weight scale, the solver receives
        2 * lam * (total mode responsibility) per mode.
    upsilon : float
        Hard threshold applied after burn-in (two-stage variant only).
    variant : str
        One of ``em``, ``em-l1``, ``em-l1-2s``.
    burn_in_tol, converge_tol : float
        Log-likelihood improvement levels ending burn-in / training.
    max_iters, restarts : int
    gamma_init_range : (float, float)
        Responsibilities are drawn uniformly in this range, then each row
        is normalized; values near 1/S break mode symmetry gently.
    seed : int
        Master seed; restart r uses the substream ``restart-r``.
    """

    basis: BasisConfig
    n_modes: int = 3
    lam: float = 5e-4
    upsilon: float = 5e-2
    variant: str = "em-l1-2s"
    burn_in_tol: float = 1e-2
    converge_tol: float = 1e-6
    max_iters: int = 100
    restarts: int = 10
    gamma_init_range: tuple[float, float] = (0.31, 0.35)
    var_floor: float = 1e-12
    seed: int = 0
    coord_tol: float = 1e-8
    max_sweeps: int = 1000
    record_path: bool = True

    def __post_init__(self) -> None:
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.lam < 0 or self.upsilon < 0:
            raise ValueError("lam and upsilon must be >= 0")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not 0 < self.converge_tol <= self.burn_in_tol:
            raise ValueError("need 0 < converge_tol <= burn_in_tol")
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be >= 1")
        lo, hi = self.gamma_init_range
        if not 0 <= lo < hi:
            raise ValueError("gamma_init_range must satisfy 0 <= low < high")
        if self.var_floor < 1e-12:
            raise ValueError("var_floor must be >= 1e-12")

    @property
    def effective_lam(self) -> float:
        return 0.0 if self.variant == "em" else self.lam

    @property
    def thresholding(self) -> bool:
        return self.variant == "em-l1-2s"

    def to_json(self) -> dict:
        d = asdict(self)
        d["basis"] = self.basis.to_json()
        d["gamma_init_range"] = list(self.gamma_init_range)
        return d


@dataclass
class IterationRecord:
    """Per-iteration snapshot, taken right after the E-step.

    ``sigma2``, ``theta_l1`` and ``support_sizes`` describe the parameters
    the E-step evaluated (i.e. the previous M-step's output); ``mstep_phase``
    names the phase of the M-step that followed, None on the final
    iteration where no M-step ran.
    """

    iteration: int
    loglik: float
    sigma2: float
    gamma_mass: np.ndarray
    theta_l1: np.ndarray
    support_sizes: np.ndarray
    mstep_phase: str | None = None
    support_changed: bool = False


@dataclass
class FitReport:
    """Outcome of one fit: winning model plus the full training trace."""

    model: SmnarxModel
    config: FitConfig
    logliks: np.ndarray
    trace: list[IterationRecord]
    phase_switch_iter: int | None
    supports: list[np.ndarray]
    converged: bool
    restart_index: int
    n_iters: int
    posterior_checks: int
    collapsed: list[dict] = field(default_factory=list)
    coef_path: list[np.ndarray] | None = None

    @property
    def loglik(self) -> float:
        return float(self.logliks[-1])

    @property
    def support_sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.supports], dtype=np.int64)

    def to_json(self) -> dict:
        return {
            "model": self.model.to_json(),
            "config": self.config.to_json(),
            "logliks": [float(v) for v in self.logliks],
            "phase_switch_iter": self.phase_switch_iter,
            "support_sizes": [int(v) for v in self.support_sizes],
            "supports": [[int(i) for i in s] for s in self.supports],
            "converged": self.converged,
            "restart_index": self.restart_index,
            "n_iters": self.n_iters,
            "posterior_checks": self.posterior_checks,
            "collapsed_restarts": self.collapsed,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    def coef_path_csv(self, path) -> None:
        """Write the nonzero coefficient trajectory: iteration,mode,term,value."""
        if self.coef_path is None:
            raise ValueError("fit was run with record_path=False")
        with open(path, "w") as fh:
            fh.write("iteration,mode,term,value\n")
            for it, snap in enumerate(self.coef_path):
                for s in range(snap.shape[0]):
                    for t in np.flatnonzero(snap[s]):
                        fh.write(f"{it},{s + 1},{t},{format(snap[s, t], '.17g')}\n")


class EstimationError(RuntimeError):
    """All restarts failed; carries per-restart diagnostics."""

    def __init__(self, message: str, diagnostics: list[dict]):
        super().__init__(message)
        self.diagnostics = diagnostics


class _RestartCollapsed(Exception):
    def __init__(self, iteration: int, mode: int, mass: float):
        super().__init__(
            f"mode {mode + 1} starved at iteration {iteration} "
            f"(responsibility mass {mass:.3e})"
        )
        self.iteration = iteration
        self.mode = mode
        self.mass = mass


def initialize(
    config: FitConfig, design: DesignMatrix, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, float, np.ndarray, np.ndarray]:
    """Draw initial responsibilities and bootstrap the parameters.

    Returns (gamma, theta, sigma2, trans, pi): responsibilities drawn
    uniformly in ``gamma_init_range`` and row-normalized, uniform chain
    parameters, and coefficients/variance from one immediate M-step.
    """
    s = config.n_modes
    lo, hi = config.gamma_init_range
    gamma = rng.uniform(lo, hi, size=(design.n_rows, s))
    gamma /= gamma.sum(axis=1, keepdims=True)
    trans = uniform_transition(s)
    pi = uniform_initial(s)
    theta = np.zeros((s, design.phi.shape[1]))
    theta, _, _ = _update_theta(design, gamma, theta, [None] * s, config, "burn_in")
    sigma2 = m_step_variance(design, gamma, theta, config.var_floor)
    return gamma, theta, sigma2, trans, pi


def _update_theta(
    design: DesignMatrix,
    gamma: np.ndarray,
    theta_prev: np.ndarray,
    active_sets: list[np.ndarray | None],
    config: FitConfig,
    phase: str,
) -> tuple[np.ndarray, list[np.ndarray | None], bool]:
    """Solve the per-mode weighted regressions; threshold when asked.

    While a mode's support is still open (active set None) the solve
    carries the l1 penalty, scaled by the mode's responsibility mass so
    the per-sample strength matches the configured weight.  Once a
    support has been frozen by thresholding, the survivors are refit
    without the penalty: selection has already happened, and dropping
    the shrinkage leaves the surviving coefficients unbiased.

    Returns the new coefficients, the active sets for the next iteration
    (supports after thresholding; None while in burn-in), and whether any
    support changed.
    """
    s = theta_prev.shape[0]
    theta = theta_prev.copy()
    settings_tpl = SolverSettings(coord_tol=config.coord_tol, max_sweeps=config.max_sweeps)
    next_active: list[np.ndarray | None] = [None] * s
    changed = False
    for m in range(s):
        weights = np.ascontiguousarray(gamma[:, m])
        if active_sets[m] is None:
            lam_raw = 2.0 * config.effective_lam * float(weights.sum())
        else:
            lam_raw = 0.0
        problem = WeightedRegressionProblem(
            design=design.phi,
            targets=design.targets,
            weights=weights,
            lam=lam_raw,
            active_set=active_sets[m],
        )
        settings = replace(settings_tpl, warm_start=theta[m])
        result = solve_weighted_lasso(problem, settings)
        new = result.theta
        if phase == "threshold":
            new = hard_threshold(new, config.upsilon)
            next_active[m] = support_of(new)
        old_support = support_of(theta[m])
        theta[m] = new
        if not np.array_equal(old_support, support_of(new)):
            changed = True
    return theta, next_active, changed


def m_step_variance(
    design: DesignMatrix, gamma: np.ndarray, theta: np.ndarray, var_floor: float = 1e-12
) -> float:
    """Shared noise variance: responsibility-weighted mean squared residual."""
    num = 0.0
    for s in range(theta.shape[0]):
        resid = design.targets - design.phi @ theta[s]
        num += float(gamma[:, s] @ (resid * resid))
    return max(num / float(gamma.sum()), var_floor)


def m_step_transitions(
    posteriors: list[PosteriorSet],
) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Closed-form transition matrix and initial distribution updates.

    Rows with zero expected transition mass reset to uniform and are
    reported in the third return value.
    """
    s = posteriors[0].gamma.shape[1]
    xi_sum = np.zeros((s, s))
    pi = np.zeros(s)
    for post in posteriors:
        if post.xi.shape[0]:
            xi_sum += post.xi.sum(axis=0)
        pi += post.gamma[0]
    row_mass = xi_sum.sum(axis=1)
    starved = [int(i) for i in np.flatnonzero(row_mass <= 0.0)]
    trans = np.empty((s, s))
    for i in range(s):
        if row_mass[i] > 0.0:
            trans[i] = xi_sum[i] / row_mass[i]
        else:
            trans[i] = 1.0 / s
    trans /= trans.sum(axis=1, keepdims=True)
    pi /= pi.sum()
    return trans, pi, starved


def _e_step(
    design: DesignMatrix,
    theta: np.ndarray,
    sigma2: float,
    trans: np.ndarray,
    pi: np.ndarray,
    basis,
) -> tuple[np.ndarray, list[PosteriorSet], float, int]:
    """Forward/backward over every segment; returns stacked gamma rows."""
    model = SmnarxModel(basis=basis, theta=theta, sigma2=sigma2, transition=trans, initial=pi)
    b_all = emission_matrix(model, design.phi, design.targets)
    gamma = np.empty((design.n_rows, theta.shape[0]))
    posteriors = []
    loglik = 0.0
    checks = 0
    for sl in design.segment_slices:
        alpha, beta, scale, ga, xi, ll = _backend.kernels.fb_pass(
            np.ascontiguousarray(b_all[sl]), model.transition, model.initial
        )
        post = PosteriorSet(alpha=alpha, beta=beta, scale=scale, gamma=ga, xi=xi, loglik=ll)
        post.validate(POSTERIOR_TOL)
        checks += 1
        gamma[sl] = ga
        posteriors.append(post)
        loglik += ll
    return gamma, posteriors, loglik, checks


def _run_restart(
    design: DesignMatrix, config: FitConfig, basis, restart_index: int
) -> tuple[dict, FitReport | None]:
    rng = substream(config.seed, f"restart-{restart_index}")
    gamma, theta, sigma2, trans, pi = initialize(config, design, rng)
    active_sets: list[np.ndarray | None] = [None] * config.n_modes
    phase = "burn_in"
    phase_switch_iter: int | None = None
    trace: list[IterationRecord] = []
    coef_path = [theta.copy()] if config.record_path else None
    posterior_checks = 0
    converged = False
    prev_ll: float | None = None
    support_changed_last = True
    starvation_floor = STARVATION_FRACTION * design.n_rows

    try:
        for it in range(1, config.max_iters + 1):
            gamma, posteriors, ll, checks = _e_step(design, theta, sigma2, trans, pi, basis)
            posterior_checks += checks
            gamma_mass = gamma.sum(axis=0)
            rec = IterationRecord(
                iteration=it,
                loglik=ll,
                sigma2=sigma2,
                gamma_mass=gamma_mass,
                theta_l1=np.abs(theta).sum(axis=1),
                support_sizes=np.array([len(support_of(t)) for t in theta]),
            )
            trace.append(rec)
            low = int(np.argmin(gamma_mass))
            if gamma_mass[low] < starvation_floor:
                raise _RestartCollapsed(it, low, float(gamma_mass[low]))

            improvement = np.inf if prev_ll is None else ll - prev_ll
            prev_ll = ll
            if config.thresholding:
                if phase == "burn_in":
                    if improvement < config.burn_in_tol:
                        phase = "threshold"
                        phase_switch_iter = it
                elif abs(improvement) < config.converge_tol and not support_changed_last:
                    converged = True
                    break
            elif abs(improvement) < config.converge_tol:
                converged = True
                break
            if it == config.max_iters:
                break

            rec.mstep_phase = phase
            theta, next_active, changed = _update_theta(
                design, gamma, theta, active_sets, config, phase
            )
            if phase == "threshold":
                active_sets = next_active
            rec.support_changed = changed
            support_changed_last = changed
            sigma2 = m_step_variance(design, gamma, theta, config.var_floor)
            trans, pi, _ = m_step_transitions(posteriors)
            if coef_path is not None:
                coef_path.append(theta.copy())
    except _RestartCollapsed as exc:
        return (
            {
                "restart": restart_index,
                "iteration": exc.iteration,
                "mode": exc.mode + 1,
                "mass": exc.mass,
                "reason": str(exc),
            },
            None,
        )

    model = SmnarxModel(
        basis=basis,
        theta=theta,
        sigma2=max(sigma2, config.var_floor),
        transition=trans,
        initial=pi,
    )
    report = FitReport(
        model=model,
        config=config,
        logliks=np.array([r.loglik for r in trace]),
        trace=trace,
        phase_switch_iter=phase_switch_iter,
        supports=model.supports(),
        converged=converged,
        restart_index=restart_index,
        n_iters=len(trace),
        posterior_checks=posterior_checks,
        coef_path=coef_path,
    )
    return {}, report


def fit(
    dataset: TrajectoryDataset, config: FitConfig, design: DesignMatrix | None = None
) -> FitReport:
    """Run the full multi-restart EM loop on the train split.

    Returns the report of the restart with the highest final training
    log-likelihood.  For the two-stage variant only restarts whose
    iteration budget covered the threshold phase count as complete; a
    restart still in burn-in at ``max_iters`` carries an unpruned
    coefficient matrix and is eligible only if no restart completed.
    Collapsed restarts are recorded in ``report.collapsed``.

    Raises
    ------
    EstimationError
        If every restart collapses (some mode starved of responsibility).
    """
    basis = enumerate_basis(config.basis)
    if design is None:
        design = build_design_matrix(basis, dataset, split="train")
    collapsed: list[dict] = []
    best: FitReport | None = None
    fallback: FitReport | None = None
    for r in range(config.restarts):
        diag, report = _run_restart(design, config, basis, r)
        if report is None:
            collapsed.append(diag)
            continue
        complete = not config.thresholding or report.phase_switch_iter is not None
        if complete:
            if best is None or report.loglik > best.loglik:
                best = report
        elif fallback is None or report.loglik > fallback.loglik:
            fallback = report
    if best is None:
        best = fallback
    if best is None:
        raise EstimationError(
            f"all {config.restarts} restarts collapsed (mode starvation)", collapsed
        )
    best.collapsed = collapsed
    return best


@dataclass
class GridPoint:
    lam: float
    rmse: float
    loglik: float
    converged: bool


def grid_search_lambda(
    dataset: TrajectoryDataset,
    config: FitConfig,
    window: tuple[float, float] = (1e-6, 1e1),
    grid_size: int = 8,
    patience: int = 3,
    restarts: int = 1,
    lambdas: list[float] | None = None,
) -> tuple[float, list[GridPoint]]:
    """Descending l1-weight search scored by validation one-step RMSE.

    Each candidate runs the l1-only variant (no thresholding, ``restarts``
    restarts, same seed) and is scored by the causal one-step-ahead RMSE
    on the validation split; the search stops early after ``patience``
    consecutive non-improvements.  An explicit ``lambdas`` list overrides
    the log-spaced window grid.
    """
    if lambdas is not None:
        grid = sorted((float(v) for v in lambdas), reverse=True)
        if not grid:
            raise ValueError("empty lambda grid")
    else:
        lo, hi = window
        if not 0 < lo < hi:
            raise ValueError("window must satisfy 0 < low < high")
        if grid_size < 1:
            raise ValueError("grid_size must be >= 1")
        grid = list(np.geomspace(hi, lo, grid_size))
    basis = enumerate_basis(config.basis)
    train_design = build_design_matrix(basis, dataset, split="train")
    val_design = build_design_matrix(basis, dataset, split="validation")
    table: list[GridPoint] = []
    best_lam = grid[0]
    best_rmse = np.inf
    misses = 0
    for lam in grid:
        cfg = replace(config, lam=lam, variant="em-l1", restarts=restarts, record_path=False)
        report = fit(dataset, cfg, design=train_design)
        sq_sum = 0.0
        count = 0
        for sl in val_design.segment_slices:
            res = filter_sequence(report.model, val_design.phi[sl], val_design.targets[sl])
            err = res.yhat - val_design.targets[sl]
            sq_sum += float(err @ err)
            count += err.shape[0]
        rmse = float(np.sqrt(sq_sum / count))
        table.append(GridPoint(lam=lam, rmse=rmse, loglik=report.loglik, converged=report.converged))
        if rmse < best_rmse:
            best_rmse = rmse
            best_lam = lam
            misses = 0
        else:
            misses += 1
            if misses >= patience:
                break
    return best_lam, table
