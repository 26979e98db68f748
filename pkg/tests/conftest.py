"""Shared fixtures: the benchmark system, one dataset, one converged fit.

The heavier fixtures are session-scoped so estimator, metrics, and
acceptance tests reuse a single simulation and a single multi-restart
fit instead of rebuilding them per test file.
"""

import numpy as np
import pytest

from smnarx.basis import BasisConfig, build_design_matrix, enumerate_basis
from smnarx.estimator import FitConfig, fit
from smnarx.simulate import benchmark_system, simulate, split_dataset

BENCH_SIM_SEED = 7
BENCH_FIT_SEED = 11


@pytest.fixture(scope="session")
def truth():
    return benchmark_system()


@pytest.fixture(scope="session")
def bench_dataset(truth):
    """12000 benchmark samples split 10000/1000/1000 in 200-sample batches."""
    return split_dataset(simulate(truth, 12000, seed=BENCH_SIM_SEED), 10000, 1000, 1000, 200)


@pytest.fixture(scope="session")
def bench_design(truth, bench_dataset):
    return build_design_matrix(truth.basis, bench_dataset, split="train")


@pytest.fixture(scope="session")
def bench_config():
    return FitConfig(
        basis=BasisConfig(n_a=4, n_b=4, q=1, n_d=3),
        n_modes=3,
        lam=5e-4,
        upsilon=5e-2,
        variant="em-l1-2s",
        restarts=3,
        seed=BENCH_FIT_SEED,
        record_path=False,
    )


@pytest.fixture(scope="session")
def bench_fit(bench_dataset, bench_config, bench_design):
    """One converged two-stage fit of the benchmark (restart 2 of seed 11)."""
    report = fit(bench_dataset, bench_config, design=bench_design)
    assert report.converged
    return report


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
