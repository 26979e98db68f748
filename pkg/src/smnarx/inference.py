"""Posterior inference for the hidden mode chain.

Given a model and one segment's design rows, this module computes Gaussian
emission probabilities, runs the scaled forward/backward recursion (per-step
normalizers c_k, shared by both directions, with log-likelihood
sum_k log c_k), and derives the state posteriors gamma and the pairwise
posteriors xi.  A causal variant filters forward only, emitting at each step
the predictive mode distribution f_k (which depends on samples strictly
before k) and the blended one-step-ahead prediction

    yhat_k = sum_s f_k^s theta_s . phi(x_k).

Raw, unscaled recursions underflow long before typical segment lengths, so
only the scaled form is implemented; emissions are floored at 1e-300 to
survive extreme outliers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .model import SmnarxModel

__all__ = [
    "EMISSION_FLOOR",
    "PosteriorSet",
    "FilterResult",
    "emission_probs",
    "emission_matrix",
    "forward_backward",
    "predictive_mode_probs",
    "predict_one_step",
    "filter_sequence",
    "dump_posteriors",
]

EMISSION_FLOOR = 1e-300


@dataclass
class PosteriorSet:
    """Forward/backward quantities for one segment.

    Attributes
    ----------
    alpha : ndarray, shape (N, S)
        Scaled forward variables (rows sum to 1).
    beta : ndarray, shape (N, S)
        Scaled backward variables.
    scale : ndarray, shape (N,)
        Normalizers c_k.
    gamma : ndarray, shape (N, S)
        State posteriors.
    xi : ndarray, shape (N-1, S, S)
        Pairwise posteriors; xi[k, i, j] = P(z_k = i, z_{k+1} = j | data).
    loglik : float
    """

    alpha: np.ndarray
    beta: np.ndarray
    scale: np.ndarray
    gamma: np.ndarray
    xi: np.ndarray
    loglik: float

    def validate(self, tol: float = 1e-9) -> None:
        """Check the posterior algebra; raises on violation.

        gamma rows must sum to 1 and xi must marginalize to gamma on both
        indices (summing out the later state gives gamma_k, summing out the
        earlier state gives gamma_{k+1}).
        """
        err = np.abs(self.gamma.sum(axis=1) - 1.0).max()
        if err > tol:
            raise FloatingPointError(f"gamma rows deviate from 1 by {err:.3e}")
        if self.xi.shape[0]:
            row_err = np.abs(self.xi.sum(axis=2) - self.gamma[:-1]).max()
            col_err = np.abs(self.xi.sum(axis=1) - self.gamma[1:]).max()
            if max(row_err, col_err) > tol:
                raise FloatingPointError(
                    f"xi fails to marginalize to gamma (errors {row_err:.3e}, {col_err:.3e})"
                )


@dataclass
class FilterResult:
    """Causal filtering output for one segment.

    ``modes`` holds the 1-based argmax of the predictive distribution f,
    which is what test-time mode inference uses (the smoothed gamma would
    peek at future samples).
    """

    f: np.ndarray
    alpha: np.ndarray
    yhat: np.ndarray
    modes: np.ndarray
    loglik: float


def emission_probs(model: SmnarxModel, design_row: np.ndarray, y: float) -> np.ndarray:
    """Gaussian emission probability of one sample under every mode."""
    return emission_matrix(model, np.asarray(design_row)[None, :], np.atleast_1d(y))[0]


def emission_matrix(model: SmnarxModel, phi: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-sample, per-mode Gaussian emission probabilities, floored.

    Returns an (N, S) C-contiguous matrix with entries
    N(y_k; theta_s . phi_k, sigma2), clipped from below at EMISSION_FLOOR.
    """
    means = phi @ model.theta.T
    resid = targets[:, None] - means
    b = np.exp(resid * resid / (-2.0 * model.sigma2)) / np.sqrt(2.0 * np.pi * model.sigma2)
    np.maximum(b, EMISSION_FLOOR, out=b)
    return np.ascontiguousarray(b)


def forward_backward(model: SmnarxModel, phi: np.ndarray, targets: np.ndarray) -> PosteriorSet:
    """Scaled forward/backward pass over one segment's design rows."""
    if phi.shape[0] == 0:
        raise ValueError("segment has no usable rows")
    b = emission_matrix(model, phi, targets)
    alpha, beta, scale, gamma, xi, loglik = _backend.kernels.fb_pass(
        b, model.transition, model.initial
    )
    return PosteriorSet(alpha=alpha, beta=beta, scale=scale, gamma=gamma, xi=xi, loglik=loglik)


def predictive_mode_probs(model: SmnarxModel, alpha_prev: np.ndarray) -> np.ndarray:
    """One-step mode prediction f_k from the filtered state at k-1."""
    f = np.asarray(alpha_prev) @ model.transition
    return f / f.sum()


def predict_one_step(model: SmnarxModel, f: np.ndarray, design_row: np.ndarray) -> float:
    """Blend the per-mode means with the predictive mode probabilities."""
    return float(f @ (model.theta @ design_row))


def filter_sequence(model: SmnarxModel, phi: np.ndarray, targets: np.ndarray) -> FilterResult:
    """Causal forward filter over one segment's design rows.

    f_k is emitted before y_k is consumed, so predictions are honest
    one-step-ahead; ``modes`` is the 1-based argmax of f.
    """
    if phi.shape[0] == 0:
        raise ValueError("segment has no usable rows")
    b = emission_matrix(model, phi, targets)
    f, alpha, loglik = _backend.kernels.filter_pass(b, model.transition, model.initial)
    means = phi @ model.theta.T
    yhat = np.sum(f * means, axis=1)
    modes = np.argmax(f, axis=1) + 1
    return FilterResult(f=f, alpha=alpha, yhat=yhat, modes=modes, loglik=loglik)


def dump_posteriors(path, model: SmnarxModel, design, split: str | None = None) -> None:
    """Write a per-row diagnostic CSV: k,segment,gamma_*,f_*,yhat.

    ``design`` is a DesignMatrix built over the dataset rows of interest;
    gamma comes from the smoothing pass and f/yhat from the causal filter.
    """
    s = model.n_modes
    header = (
        ["k", "segment"]
        + [f"gamma_{j + 1}" for j in range(s)]
        + [f"f_{j + 1}" for j in range(s)]
        + ["yhat"]
    )
    lines = [",".join(header)]
    for i, sl in enumerate(design.segment_slices):
        phi = design.phi[sl]
        targets = design.targets[sl]
        post = forward_backward(model, phi, targets)
        filt = filter_sequence(model, phi, targets)
        ks = design.row_sample[sl]
        for r in range(phi.shape[0]):
            cells = [str(int(ks[r])), str(i)]
            cells += [format(v, ".17g") for v in post.gamma[r]]
            cells += [format(v, ".17g") for v in filt.f[r]]
            cells.append(format(filt.yhat[r], ".17g"))
            lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
