"""Pure NumPy implementations of the sequential hot loops.

These are the reference semantics for the compiled backend in
``_kernels_c``: same signatures, same update order, same floating-point
operation sequence wherever the result depends on it.  All arrays are
expected C-contiguous float64 except the design matrix passed to
``cd_sweeps``, which must be Fortran-ordered for cheap column access.

Kernels
-------
fb_pass(b, trans, pi)
    Scaled forward/backward recursion over one segment.
filter_pass(b, trans, pi)
    Causal forward filter emitting one-step-ahead mode probabilities.
gram_cd(gram, q, diag, lam, theta, s, coord_tol, max_sweeps)
    Cyclic coordinate descent sweeps in Gram form for the l1 problem.
simulate_path(parent, var, coef, trans_cum, pi_cum, u, mode_u, noise, ...)
    Mode chain plus polynomial NARX recursion with additive noise.
"""

from __future__ import annotations

import numpy as np

__all__ = ["fb_pass", "filter_pass", "gram_cd", "simulate_path"]


def fb_pass(b, trans, pi):
    """Scaled forward/backward pass over one segment.

    Parameters
    ----------
    b : ndarray, shape (N, S)
        Per-sample emission probabilities, strictly positive.
    trans : ndarray, shape (S, S)
        Row-stochastic transition matrix.
    pi : ndarray, shape (S,)
        Initial mode distribution.

    Returns
    -------
    alpha : ndarray, shape (N, S)
        Scaled forward variables; each row sums to 1.
    beta : ndarray, shape (N, S)
        Scaled backward variables (last row all ones).
    scale : ndarray, shape (N,)
        Per-step normalizers c_k; log-likelihood is sum(log(scale)).
    gamma : ndarray, shape (N, S)
        State posteriors alpha * beta.
    xi : ndarray, shape (N-1, S, S)
        Pairwise posteriors.
    loglik : float

    Raises
    ------
    FloatingPointError
        If a normalizer underflows to zero (degenerate emissions).
    """
    n, s = b.shape
    alpha = np.empty((n, s))
    beta = np.empty((n, s))
    scale = np.empty(n)
    a0 = pi * b[0]
    c = a0.sum()
    if not c > 0.0:
        raise FloatingPointError("degenerate emissions: zero forward normalizer at step 0")
    scale[0] = c
    alpha[0] = a0 / c
    for k in range(1, n):
        ak = (alpha[k - 1] @ trans) * b[k]
        c = ak.sum()
        if not c > 0.0:
            raise FloatingPointError(
                f"degenerate emissions: zero forward normalizer at step {k}"
            )
        scale[k] = c
        alpha[k] = ak / c
    beta[n - 1] = 1.0
    for k in range(n - 2, -1, -1):
        beta[k] = (trans @ (b[k + 1] * beta[k + 1])) / scale[k + 1]
    gamma = alpha * beta
    xi = np.empty((n - 1, s, s))
    for k in range(n - 1):
        xi[k] = (alpha[k][:, None] * trans) * (b[k + 1] * beta[k + 1])[None, :] / scale[k + 1]
    loglik = float(np.log(scale).sum())
    return alpha, beta, scale, gamma, xi, loglik


def filter_pass(b, trans, pi):
    """Causal forward filter over one segment.

    The predictive mode distribution f_k uses only samples before k:
    f_1 = pi and f_k = alpha_{k-1} @ trans afterwards; the filtered state
    alpha_k then folds in emission k.

    Returns
    -------
    f : ndarray, shape (N, S)
        Predictive (prior-to-observation) mode probabilities per step.
    alpha : ndarray, shape (N, S)
        Filtered (posterior) mode probabilities per step.
    loglik : float
    """
    n, s = b.shape
    f = np.empty((n, s))
    alpha = np.empty((n, s))
    loglik = 0.0
    f[0] = pi
    for k in range(n):
        if k > 0:
            f[k] = alpha[k - 1] @ trans
        ak = f[k] * b[k]
        c = ak.sum()
        if not c > 0.0:
            raise FloatingPointError(
                f"degenerate emissions: zero filter normalizer at step {k}"
            )
        alpha[k] = ak / c
        loglik += np.log(c)
    return f, alpha, float(loglik)


def gram_cd(gram, q, diag, lam, theta, s, coord_tol, max_sweeps):
    """Cyclic coordinate descent on the weighted l1 objective, Gram form.

    For the problem min sum_k w_k (y_k - phi_k . theta)^2 + lam sum |theta_i|
    restricted to a coordinate subset, the inputs are the weighted Gram
    matrix G_ij = sum_k w_k phi_i phi_j, the correlations
    q_i = sum_k w_k phi_i y_k, and diag_i = G_ii > 0.  Each update is the
    exact single-coordinate minimizer theta_i <- soft(rho_i, lam/2) / diag_i
    with rho_i = q_i - s_i + diag_i * theta_i and the product s = G @ theta
    maintained incrementally.

    ``theta`` and ``s`` are updated in place.

    Returns
    -------
    sweeps : int
    converged : bool
        True once the largest coordinate change in a sweep drops below
        ``coord_tol``.
    objectives : ndarray, shape (sweeps,)
        Objective after each sweep, up to the constant sum_k w_k y_k^2.
    """
    nw = theta.shape[0]
    half_lam = 0.5 * lam
    objectives = np.empty(max_sweeps)
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        max_delta = 0.0
        for i in range(nw):
            old = theta[i]
            rho = q[i] - s[i] + diag[i] * old
            if rho > half_lam:
                new = (rho - half_lam) / diag[i]
            elif rho < -half_lam:
                new = (rho + half_lam) / diag[i]
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                s += gram[i] * delta
                theta[i] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        objectives[sweeps] = theta @ s - 2.0 * (q @ theta) + lam * np.abs(theta).sum()
        sweeps += 1
        if max_delta < coord_tol:
            converged = True
            break
    return sweeps, converged, objectives[:sweeps].copy()


def simulate_path(parent, var, coef, trans_cum, pi_cum, u, mode_u, noise, n_a, n_b, guard):
    """Simulate the mode chain and output recursion for one trajectory.

    Parameters
    ----------
    parent, var : int64 ndarray, shape (n,)
        Basis evaluation plan: term t equals term parent[t] times lagged
        variable var[t]; term 0 is the constant.
    coef : ndarray, shape (S, n)
        Per-mode coefficient vectors.
    trans_cum : ndarray, shape (S, S)
        Row-wise cumulative sums of the transition matrix.
    pi_cum : ndarray, shape (S,)
        Cumulative sums of the initial distribution.
    u : ndarray, shape (N, q)
        Exogenous input samples.
    mode_u : ndarray, shape (N,)
        Pre-drawn uniforms deciding the mode at each step.
    noise : ndarray, shape (N,)
        Pre-drawn additive output noise (already scaled by sigma).
    n_a, n_b : int
        Output / input lag depths; lags before the start read as zero.
    guard : float
        Raise once |y_k| exceeds this bound.

    Returns
    -------
    y : ndarray, shape (N,)
    z : int64 ndarray, shape (N,)
        Mode indices, zero-based.
    """
    n_steps, q = u.shape
    n_terms = parent.shape[0]
    n_modes = trans_cum.shape[0]
    p = n_a + q * n_b
    y = np.empty(n_steps)
    z = np.empty(n_steps, dtype=np.int64)
    x = np.empty(p)
    terms = np.empty(n_terms)
    terms[0] = 1.0
    for k in range(n_steps):
        row = pi_cum if k == 0 else trans_cum[z[k - 1]]
        s = 0
        while s < n_modes - 1 and mode_u[k] >= row[s]:
            s += 1
        z[k] = s
        for lag in range(1, n_a + 1):
            x[lag - 1] = y[k - lag] if k - lag >= 0 else 0.0
        for lag in range(1, n_b + 1):
            base = n_a + (lag - 1) * q
            for c in range(q):
                x[base + c] = u[k - lag, c] if k - lag >= 0 else 0.0
        acc = coef[s, 0]
        for t in range(1, n_terms):
            terms[t] = terms[parent[t]] * x[var[t]]
            acc += coef[s, t] * terms[t]
        yk = acc + noise[k]
        if not abs(yk) <= guard:
            raise OverflowError(
                f"trajectory diverged: |y| > {guard:g} at step {k} (mode {s + 1})"
            )
        y[k] = yk
    return y, z
