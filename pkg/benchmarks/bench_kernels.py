"""Time the compiled kernels against the pure-NumPy fallback.

Each kernel runs the same workload through both backends (sizes match the
benchmark study: 200-sample segments, 3 modes, a 165-term dictionary) and
reports the best-of-``--repeats`` wall time plus the speedup.  Exits
nonzero if the compiled extension is missing, since then there is nothing
to compare.

Usage::

    python benchmarks/bench_kernels.py [--repeats 5] [--calls 20]
"""

import argparse
import sys
import time

import numpy as np

from smnarx._backend import available_backends, get_kernels
from smnarx.basis import build_design_matrix
from smnarx.inference import emission_matrix
from smnarx.model import SmnarxModel
from smnarx.simulate import benchmark_system, simulate


def _best_time(fn, repeats, calls):
    best = np.inf
    for _ in range(repeats):
        started = time.perf_counter()
        for _ in range(calls):
            fn()
        best = min(best, (time.perf_counter() - started) / calls)
    return best


def _workloads(seed=0):
    """One closure per (kernel, backend) pair over shared random inputs."""
    rng = np.random.default_rng(seed)
    truth = benchmark_system()
    n_steps = 12000
    dataset = simulate(truth, n_steps, seed=7)
    design = build_design_matrix(truth.basis, dataset, split=None)

    # Perturbed truth stands in for a mid-EM model: emissions are spread
    # over modes instead of nearly one-hot.
    model = SmnarxModel(
        basis=truth.basis,
        theta=truth.theta + rng.normal(scale=0.05, size=truth.theta.shape),
        sigma2=0.05,
        transition=truth.transition,
        initial=truth.initial,
    )
    b = emission_matrix(model, design.phi[:200], design.targets[:200])
    b_long = emission_matrix(model, design.phi[:1000], design.targets[:1000])

    n_terms = truth.basis.n
    w = rng.uniform(0.1, 1.0, size=design.phi.shape[0])
    phi = design.phi
    gram = np.ascontiguousarray((phi * w[:, None]).T @ phi)
    q = np.ascontiguousarray(phi.T @ (w * design.targets))
    diag = np.ascontiguousarray(np.diag(gram))
    lam = 2.0 * 5e-4 * float(w.sum())

    # Rebuild the exact input stream of the seed-7 trajectory simulated
    # above; other draws can push the cubic mode past the overflow guard.
    sim_rng = np.random.default_rng(np.random.SeedSequence(7))
    u = sim_rng.uniform(-1.0, 1.0, size=(n_steps, 1))
    mode_u = sim_rng.random(n_steps)
    noise = sim_rng.standard_normal(n_steps) * truth.noise_std
    sim_args = (
        truth.basis._parent, truth.basis._var, np.ascontiguousarray(truth.theta),
        np.cumsum(truth.transition, axis=1), np.cumsum(truth.initial),
        u, mode_u, noise, 4, 4, 1e6,
    )

    def bind(kernels):
        def run_gram_cd():
            theta = np.zeros(n_terms)
            s = np.zeros(n_terms)
            kernels.gram_cd(gram, q, diag, lam, theta, s, 1e-8, 50)

        return {
            "fb_pass (N=200, S=3)": lambda: kernels.fb_pass(
                b, model.transition, model.initial
            ),
            "filter_pass (N=1000, S=3)": lambda: kernels.filter_pass(
                b_long, model.transition, model.initial
            ),
            "gram_cd (165 terms, 50 sweeps)": run_gram_cd,
            "simulate_path (N=12000)": lambda: kernels.simulate_path(*sim_args),
        }

    return bind


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="timing repetitions")
    parser.add_argument("--calls", type=int, default=20, help="kernel calls per repetition")
    args = parser.parse_args(argv)

    if "c" not in available_backends():
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1

    bind = _workloads()
    tasks = {name: bind(get_kernels(name)) for name in ("python", "c")}
    names = list(tasks["python"])
    width = max(len(n) for n in names)
    print(f"{'kernel':<{width}}  {'python':>10}  {'compiled':>10}  {'speedup':>8}")
    for name in names:
        t_py = _best_time(tasks["python"][name], args.repeats, args.calls)
        t_c = _best_time(tasks["c"][name], args.repeats, args.calls)
        print(
            f"{name:<{width}}  {t_py * 1e3:>8.3f}ms  {t_c * 1e3:>8.3f}ms  "
            f"{t_py / t_c:>7.1f}x"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
