"""Coordinate-descent solver versus independent oracles.

The penalized path is checked against the from-scratch accelerated
proximal-gradient oracle in tests/_oracles.py, the unpenalized case
against lstsq on the square-root weighted design, and every solution
against the subgradient stationarity conditions of the objective.
"""

import numpy as np
import pytest

from _oracles import (
    fista_weighted_lasso,
    random_weighted_lasso,
    weighted_least_squares,
)
from smnarx.solver import (
    SolverSettings,
    WeightedRegressionProblem,
    hard_threshold,
    solve_weighted_lasso,
    support_of,
)


def _random_problem(rng, n_rows=80, n_cols=12, lam=0.8):
    phi = rng.normal(size=(n_rows, n_cols))
    theta = np.zeros(n_cols)
    theta[: n_cols // 3] = rng.normal(scale=1.5, size=n_cols // 3)
    y = phi @ theta + rng.normal(scale=0.2, size=n_rows)
    w = rng.uniform(0.1, 1.5, size=n_rows)
    return WeightedRegressionProblem(phi, y, w, lam=lam)


def test_matches_proximal_gradient_oracle():
    settings = SolverSettings(coord_tol=1e-10, max_sweeps=100_000)
    for seed in range(8):
        phi, y, w, lam = random_weighted_lasso(np.random.default_rng(100 + seed))
        problem = WeightedRegressionProblem(phi, y, w, lam=lam)
        result = solve_weighted_lasso(problem, settings)
        assert result.converged
        oracle = fista_weighted_lasso(phi, y, w, lam)
        np.testing.assert_allclose(result.theta, oracle, atol=1e-6, rtol=0.0)


def test_unpenalized_matches_normal_equations(rng):
    phi = rng.normal(size=(150, 10))
    y = rng.normal(size=150)
    w = rng.uniform(0.2, 2.0, size=150)
    problem = WeightedRegressionProblem(phi, y, w, lam=0.0)
    result = solve_weighted_lasso(problem)
    assert result.converged
    np.testing.assert_allclose(
        result.theta, weighted_least_squares(phi, y, w), atol=1e-8, rtol=0.0
    )


def test_solution_satisfies_stationarity(rng):
    problem = _random_problem(rng)
    settings = SolverSettings()
    result = solve_weighted_lasso(problem, settings)
    assert result.converged
    resid = problem.targets - problem.design @ result.theta
    corr = problem.design.T @ (problem.weights * resid)
    colsq = np.einsum(
        "ki,ki->i", problem.design, problem.design * problem.weights[:, None]
    )
    half_lam = 0.5 * problem.lam
    slack = settings.coord_tol * colsq + 1e-12
    zero = result.theta == 0.0
    assert np.all(np.abs(corr[zero]) <= half_lam + slack[zero])
    live = ~zero
    target = half_lam * np.sign(result.theta[live])
    assert np.all(np.abs(corr[live] - target) <= 10.0 * slack[live])


def test_objectives_monotone_and_match_final_value(rng):
    problem = _random_problem(rng, n_rows=120, n_cols=20, lam=1.5)
    result = solve_weighted_lasso(problem)
    objs = result.objectives
    assert objs.size >= 1
    drops = np.diff(objs)
    assert np.all(drops <= 1e-7 * (1.0 + np.abs(objs[:-1])))
    final = problem.objective(result.theta)
    assert objs[-1] == pytest.approx(final, rel=1e-8, abs=1e-8)


def test_large_penalty_gives_zero_solution(rng):
    phi = rng.normal(size=(60, 7))
    y = rng.normal(size=60)
    w = rng.uniform(0.5, 1.0, size=60)
    lam = 2.02 * float(np.max(np.abs(phi.T @ (w * y))))
    result = solve_weighted_lasso(WeightedRegressionProblem(phi, y, w, lam=lam))
    assert result.converged
    assert np.all(result.theta == 0.0)


def test_warm_start_at_solution_is_fixed_point(rng):
    problem = _random_problem(rng)
    cold = solve_weighted_lasso(problem)
    warm = solve_weighted_lasso(problem, SolverSettings(warm_start=cold.theta))
    assert warm.converged
    assert warm.sweeps <= 3
    np.testing.assert_allclose(warm.theta, cold.theta, atol=1e-6, rtol=0.0)


def test_sweep_budget_exhaustion_reported(rng):
    problem = _random_problem(rng, n_rows=200, n_cols=30, lam=0.05)
    starved = solve_weighted_lasso(problem, SolverSettings(max_sweeps=1))
    assert not starved.converged
    assert starved.sweeps == 1


def test_active_set_pins_excluded_coordinates(rng):
    phi = rng.normal(size=(90, 9))
    y = phi @ np.array([1.0, 0.0, -2.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0])
    y += rng.normal(scale=0.1, size=90)
    w = np.ones(90)
    active = np.array([0, 2, 5])
    problem = WeightedRegressionProblem(phi, y, w, lam=0.3, active_set=active)
    warm = np.full(9, 0.7)
    result = solve_weighted_lasso(problem, SolverSettings(warm_start=warm))
    assert result.converged
    outside = np.setdiff1d(np.arange(9), active)
    assert np.all(result.theta[outside] == 0.0)
    reduced = fista_weighted_lasso(phi[:, active], y, w, 0.3)
    np.testing.assert_allclose(result.theta[active], reduced, atol=1e-6, rtol=0.0)


def test_empty_active_set_returns_zero(rng):
    phi = rng.normal(size=(30, 4))
    y = rng.normal(size=30)
    problem = WeightedRegressionProblem(
        phi, y, np.ones(30), lam=0.1, active_set=np.empty(0, dtype=np.int64)
    )
    result = solve_weighted_lasso(problem)
    assert result.converged
    assert np.all(result.theta == 0.0)


def test_degenerate_columns_zeroed_and_flagged(rng):
    phi = rng.normal(size=(12, 6))
    phi[:, 2] = 0.0
    w = np.ones(12)
    w[10:] = 0.0
    phi[:, 5] = 0.0
    phi[10:, 5] = 3.0  # nonzero only on zero-weight rows
    y = rng.normal(size=12)
    result = solve_weighted_lasso(WeightedRegressionProblem(phi, y, w, lam=0.01))
    assert result.theta[2] == 0.0
    assert result.theta[5] == 0.0
    np.testing.assert_array_equal(result.degenerate, [2, 5])


def test_problem_validation():
    phi = np.ones((4, 2))
    y = np.zeros(4)
    w = np.ones(4)
    with pytest.raises(ValueError, match="match the design rows"):
        WeightedRegressionProblem(phi, np.zeros(3), w)
    with pytest.raises(ValueError, match="match the design rows"):
        WeightedRegressionProblem(phi, y, np.ones(5))
    with pytest.raises(ValueError, match="lam"):
        WeightedRegressionProblem(phi, y, w, lam=-0.1)
    with pytest.raises(ValueError, match="non-negative"):
        WeightedRegressionProblem(phi, y, -w)
    with pytest.raises(ValueError, match="positive sum"):
        WeightedRegressionProblem(phi, y, np.zeros(4))
    with pytest.raises(ValueError, match="out of range"):
        WeightedRegressionProblem(phi, y, w, active_set=np.array([0, 2]))
    with pytest.raises(ValueError, match="out of range"):
        WeightedRegressionProblem(phi, y, w, active_set=np.array([-1]))


def test_settings_validation(rng):
    with pytest.raises(ValueError, match="coord_tol"):
        SolverSettings(coord_tol=0.0)
    with pytest.raises(ValueError, match="max_sweeps"):
        SolverSettings(max_sweeps=0)
    problem = _random_problem(rng)
    with pytest.raises(ValueError, match="warm_start"):
        solve_weighted_lasso(problem, SolverSettings(warm_start=np.zeros(3)))


def test_hard_threshold_boundary_and_idempotence():
    theta = np.array([-0.3, -0.05, -0.049, 0.0, 0.049, 0.05, 1.2])
    pruned = hard_threshold(theta, 0.05)
    np.testing.assert_array_equal(
        pruned, [-0.3, -0.05, 0.0, 0.0, 0.0, 0.05, 1.2]
    )
    np.testing.assert_array_equal(hard_threshold(pruned, 0.05), pruned)
    np.testing.assert_array_equal(hard_threshold(theta, 0.0), theta)
    with pytest.raises(ValueError, match="upsilon"):
        hard_threshold(theta, -1e-9)


def test_support_of():
    np.testing.assert_array_equal(
        support_of(np.array([0.0, 1.0, 0.0, -2.0])), [1, 3]
    )
    assert support_of(np.zeros(5)).size == 0
