"""Model containers: validation, supports, and JSON round trips."""

import numpy as np
import pytest

from smnarx.basis import BasisConfig, enumerate_basis
from smnarx.model import SmnarxModel, TrueSystem, uniform_initial, uniform_transition


@pytest.fixture
def basis():
    return enumerate_basis(BasisConfig(2, 1, 1, 2))


def _model(basis, **overrides):
    theta = np.zeros((2, basis.n))
    theta[0, 1] = 0.5
    theta[1, 2] = -0.25
    kwargs = dict(
        basis=basis,
        theta=theta,
        sigma2=0.04,
        transition=np.array([[0.9, 0.1], [0.2, 0.8]]),
        initial=np.array([0.5, 0.5]),
    )
    kwargs.update(overrides)
    return SmnarxModel(**kwargs)


def test_validation_errors(basis):
    with pytest.raises(ValueError, match="columns"):
        _model(basis, theta=np.zeros((2, basis.n + 1)))
    with pytest.raises(ValueError, match="sum to 1"):
        _model(basis, transition=np.array([[0.9, 0.2], [0.2, 0.8]]))
    with pytest.raises(ValueError, match="negative"):
        _model(basis, initial=np.array([1.5, -0.5]))
    with pytest.raises(ValueError, match="sigma2"):
        _model(basis, sigma2=0.0)
    with pytest.raises(ValueError, match="transition must be"):
        _model(basis, transition=np.eye(3))


def test_supports_and_describe(basis):
    model = _model(basis)
    assert [list(s) for s in model.supports()] == [[1], [2]]
    np.testing.assert_array_equal(model.support_sizes(), [1, 1])
    text = model.describe()
    assert "mode 1" in text and "sigma2" in text


def test_model_json_round_trip(tmp_path, basis):
    model = _model(basis)
    path = tmp_path / "model.json"
    model.save(path)
    back = SmnarxModel.load(path)
    assert back.basis == model.basis
    np.testing.assert_array_equal(back.theta, model.theta)
    np.testing.assert_array_equal(back.transition, model.transition)
    np.testing.assert_array_equal(back.initial, model.initial)
    assert back.sigma2 == model.sigma2


def test_uniform_helpers():
    np.testing.assert_allclose(uniform_initial(4), 0.25)
    np.testing.assert_allclose(uniform_transition(4).sum(axis=1), 1.0)


def test_true_system_allows_zero_noise(basis):
    theta = np.zeros((1, basis.n))
    theta[0, 1] = 0.9
    system = TrueSystem(
        basis=basis,
        theta=theta,
        noise_std=0.0,
        transition=np.ones((1, 1)),
        initial=np.ones(1),
    )
    model = system.as_model()
    assert model.sigma2 == 1e-12  # floored for inference use
    with pytest.raises(ValueError, match="noise_std"):
        TrueSystem(
            basis=basis, theta=theta, noise_std=-0.1,
            transition=np.ones((1, 1)), initial=np.ones(1),
        )


def test_true_system_input_law_validation(basis):
    theta = np.zeros((1, basis.n))
    with pytest.raises(ValueError, match="input law"):
        TrueSystem(
            basis=basis, theta=theta, noise_std=0.1,
            transition=np.ones((1, 1)), initial=np.ones(1),
            input_law={"kind": "gaussian"},
        )
    with pytest.raises(ValueError, match="low < high"):
        TrueSystem(
            basis=basis, theta=theta, noise_std=0.1,
            transition=np.ones((1, 1)), initial=np.ones(1),
            input_law={"kind": "uniform", "low": 1.0, "high": -1.0},
        )


def test_true_system_round_trip(tmp_path, truth):
    path = tmp_path / "system.json"
    truth.save(path)
    back = TrueSystem.load(path)
    assert back.basis == truth.basis
    np.testing.assert_array_equal(back.theta, truth.theta)
    np.testing.assert_allclose(back.noise_std, truth.noise_std)
    np.testing.assert_array_equal(back.transition, truth.transition)
    assert back.input_law == truth.input_law
