"""Trajectory generation for switched Markov polynomial NARX systems.

A hidden mode chain z_k is drawn step by step (z_1 from the initial
distribution, then rows of the transition matrix) and the output follows
the active mode's polynomial NARX map plus Gaussian noise:

    y_k = theta_{z_k} . phi(x_k) + e_k,   e_k ~ N(0, noise_std^2)

with lagged values before the start of the trajectory read as zero.  All
randomness is pre-drawn from one generator in a fixed order (inputs, then
mode uniforms, then noise), so a seed pins the trajectory exactly and both
kernel backends consume identical draws.
"""

from __future__ import annotations

import numpy as np

from . import _backend
from .basis import BasisConfig, enumerate_basis
from .dataset import Segment, TrajectoryDataset
from .model import TrueSystem, uniform_initial

__all__ = ["benchmark_system", "simulate", "split_dataset", "OVERFLOW_GUARD"]

OVERFLOW_GUARD = 1e6


def benchmark_system() -> TrueSystem:
    """Three-mode polynomial benchmark system.

    Each mode keeps four active terms out of the full degree-3 dictionary
    over four output and four input lags (165 terms); modes persist with
    probability 0.98 and advance cyclically 1 -> 2 -> 3 -> 1.  Noise is
    N(0, 0.1^2) and the input is i.i.d. uniform on [-1, 1].
    """
    config = BasisConfig(n_a=4, n_b=4, q=1, n_d=3)
    basis = enumerate_basis(config)
    p = config.lag_vector_length

    def term(powers: dict[int, int]) -> int:
        expo = [0] * p
        for pos, deg in powers.items():
            expo[pos] = deg
        return basis.index_of(tuple(expo))

    # lag vector layout: [y(k-1..k-4), u(k-1..k-4)]
    y1, y2 = 0, 1
    u1, u2, u3 = 4, 5, 6
    theta = np.zeros((3, basis.n))
    theta[0, term({y1: 1})] = 0.5
    theta[0, term({u2: 1})] = 0.8
    theta[0, term({u1: 2})] = 1.0
    theta[0, term({y2: 2})] = -0.3
    theta[1, term({y1: 3})] = 0.2
    theta[1, term({y2: 1})] = -0.5
    theta[1, term({y2: 1, u2: 2})] = -0.7
    theta[1, term({u2: 2})] = 0.6
    theta[2, term({y2: 1})] = 0.5
    theta[2, term({y1: 1})] = -0.4
    theta[2, term({u1: 1})] = 0.2
    theta[2, term({y1: 1, u3: 1})] = -0.4
    transition = np.array(
        [
            [0.98, 0.02, 0.0],
            [0.0, 0.98, 0.02],
            [0.02, 0.0, 0.98],
        ]
    )
    return TrueSystem(
        basis=basis,
        theta=theta,
        noise_std=0.1,
        transition=transition,
        initial=uniform_initial(3),
    )


def simulate(
    system: TrueSystem,
    n: int,
    seed: int,
    guard: float = OVERFLOW_GUARD,
) -> TrajectoryDataset:
    """Draw one trajectory of ``n`` samples from ``system``.

    The result is a single train-tagged segment carrying the true modes
    (1-based).  Equal seeds give byte-identical datasets.

    Raises
    ------
    OverflowError
        If |y_k| exceeds ``guard`` (unstable user-supplied dynamics).
    """
    cfg = system.config
    if n <= cfg.max_lag:
        raise ValueError(f"need more than max(n_a, n_b) = {cfg.max_lag} samples, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    lo = float(system.input_law["low"])
    hi = float(system.input_law["high"])
    u = rng.uniform(lo, hi, size=(n, cfg.q))
    mode_u = rng.random(n)
    noise = rng.standard_normal(n) * system.noise_std
    y, z = _backend.kernels.simulate_path(
        system.basis._parent,
        system.basis._var,
        np.ascontiguousarray(system.theta),
        np.cumsum(system.transition, axis=1),
        np.cumsum(system.initial),
        u,
        mode_u,
        noise,
        cfg.n_a,
        cfg.n_b,
        float(guard),
    )
    segment = Segment(u=u, y=y, start=0, split="train", true_modes=z + 1)
    return TrajectoryDataset(segments=[segment])


def split_dataset(
    data: TrajectoryDataset, train: int, val: int, test: int, batch_len: int
) -> TrajectoryDataset:
    """Tag the leading samples train/validation/test and cut mini-batches."""
    return data.split(train, val, test, batch_len)
