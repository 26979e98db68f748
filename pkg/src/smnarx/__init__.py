"""Switched Markov polynomial NARX models: simulation, EM estimation, metrics.

The package identifies systems whose output follows one of several sparse
polynomial NARX submodels, with the active submodel evolving as a hidden
first-order Markov chain.  Estimation runs Expectation Maximization with
scaled forward-backward inference and a weighted-lasso M-step, optionally
followed by a hard-threshold phase that prunes the coefficient supports.
"""

from ._backend import BACKEND, available_backends, get_kernels
from .basis import (
    BasisConfig,
    DesignMatrix,
    PolynomialBasis,
    build_design_matrix,
    enumerate_basis,
    evaluate_regressors,
    lagged_matrix,
    regressor_matrix,
)
from .dataset import Segment, TrajectoryDataset
from .estimator import (
    VARIANTS,
    EstimationError,
    FitConfig,
    FitReport,
    GridPoint,
    IterationRecord,
    fit,
    grid_search_lambda,
)
from .inference import (
    FilterResult,
    PosteriorSet,
    emission_matrix,
    emission_probs,
    filter_sequence,
    forward_backward,
    predict_one_step,
    predictive_mode_probs,
)
from .metrics import (
    EvaluationReport,
    StudyResult,
    StudyRun,
    apply_permutation,
    dump_mode_trace,
    evaluate,
    f_a,
    f_s,
    f_theta,
    match_modes,
    rmse,
    run_study,
)
from .model import SmnarxModel, TrueSystem, uniform_initial, uniform_transition
from .simulate import benchmark_system, simulate, split_dataset
from .solver import (
    SolverResult,
    SolverSettings,
    WeightedRegressionProblem,
    hard_threshold,
    solve_weighted_lasso,
    support_of,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BasisConfig",
    "DesignMatrix",
    "EstimationError",
    "EvaluationReport",
    "FilterResult",
    "FitConfig",
    "FitReport",
    "GridPoint",
    "IterationRecord",
    "PolynomialBasis",
    "PosteriorSet",
    "Segment",
    "SmnarxModel",
    "SolverResult",
    "SolverSettings",
    "StudyResult",
    "StudyRun",
    "TrajectoryDataset",
    "TrueSystem",
    "VARIANTS",
    "WeightedRegressionProblem",
    "apply_permutation",
    "available_backends",
    "benchmark_system",
    "build_design_matrix",
    "dump_mode_trace",
    "emission_matrix",
    "emission_probs",
    "enumerate_basis",
    "evaluate",
    "evaluate_regressors",
    "f_a",
    "f_s",
    "f_theta",
    "filter_sequence",
    "fit",
    "forward_backward",
    "get_kernels",
    "grid_search_lambda",
    "hard_threshold",
    "lagged_matrix",
    "match_modes",
    "predict_one_step",
    "predictive_mode_probs",
    "regressor_matrix",
    "rmse",
    "run_study",
    "simulate",
    "solve_weighted_lasso",
    "split_dataset",
    "support_of",
    "uniform_initial",
    "uniform_transition",
    "__version__",
]
