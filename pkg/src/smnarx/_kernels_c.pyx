# Compiled counterparts of the kernels in _kernels_py; same signatures,
# same update order, selected at import time by _backend.

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, log

cnp.import_array()

__all__ = ["fb_pass", "filter_pass", "gram_cd", "simulate_path"]


def fb_pass(const double[:, ::1] b, const double[:, ::1] trans, const double[::1] pi):
    """Scaled forward/backward pass; see _kernels_py.fb_pass."""
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t s = b.shape[1]
    alpha_arr = np.empty((n, s))
    beta_arr = np.empty((n, s))
    scale_arr = np.empty(n)
    gamma_arr = np.empty((n, s))
    xi_arr = np.empty((n - 1 if n > 1 else 0, s, s))
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[:, ::1] beta = beta_arr
    cdef double[::1] scale = scale_arr
    cdef double[:, ::1] gamma = gamma_arr
    cdef double[:, :, ::1] xi = xi_arr
    cdef Py_ssize_t k, i, j
    cdef double c, acc, loglik

    c = 0.0
    for i in range(s):
        alpha[0, i] = pi[i] * b[0, i]
        c += alpha[0, i]
    if not c > 0.0:
        raise FloatingPointError("degenerate emissions: zero forward normalizer at step 0")
    scale[0] = c
    for i in range(s):
        alpha[0, i] /= c
    for k in range(1, n):
        c = 0.0
        for j in range(s):
            acc = 0.0
            for i in range(s):
                acc += alpha[k - 1, i] * trans[i, j]
            acc *= b[k, j]
            alpha[k, j] = acc
            c += acc
        if not c > 0.0:
            raise FloatingPointError(
                f"degenerate emissions: zero forward normalizer at step {k}"
            )
        scale[k] = c
        for j in range(s):
            alpha[k, j] /= c
    for i in range(s):
        beta[n - 1, i] = 1.0
    for k in range(n - 2, -1, -1):
        c = scale[k + 1]
        for i in range(s):
            acc = 0.0
            for j in range(s):
                acc += trans[i, j] * b[k + 1, j] * beta[k + 1, j]
            beta[k, i] = acc / c
    for k in range(n):
        for i in range(s):
            gamma[k, i] = alpha[k, i] * beta[k, i]
    for k in range(n - 1):
        c = scale[k + 1]
        for i in range(s):
            for j in range(s):
                xi[k, i, j] = alpha[k, i] * trans[i, j] * b[k + 1, j] * beta[k + 1, j] / c
    loglik = 0.0
    for k in range(n):
        loglik += log(scale[k])
    return alpha_arr, beta_arr, scale_arr, gamma_arr, xi_arr, loglik


def filter_pass(const double[:, ::1] b, const double[:, ::1] trans, const double[::1] pi):
    """Causal forward filter; see _kernels_py.filter_pass."""
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t s = b.shape[1]
    f_arr = np.empty((n, s))
    alpha_arr = np.empty((n, s))
    cdef double[:, ::1] f = f_arr
    cdef double[:, ::1] alpha = alpha_arr
    cdef Py_ssize_t k, i, j
    cdef double c, acc, loglik

    loglik = 0.0
    for i in range(s):
        f[0, i] = pi[i]
    for k in range(n):
        if k > 0:
            for j in range(s):
                acc = 0.0
                for i in range(s):
                    acc += alpha[k - 1, i] * trans[i, j]
                f[k, j] = acc
        c = 0.0
        for i in range(s):
            alpha[k, i] = f[k, i] * b[k, i]
            c += alpha[k, i]
        if not c > 0.0:
            raise FloatingPointError(
                f"degenerate emissions: zero filter normalizer at step {k}"
            )
        for i in range(s):
            alpha[k, i] /= c
        loglik += log(c)
    return f_arr, alpha_arr, loglik


def gram_cd(const double[:, ::1] gram, const double[::1] q,
            const double[::1] diag, double lam, double[::1] theta,
            double[::1] s, double coord_tol, int max_sweeps):
    """Cyclic coordinate descent in Gram form; see _kernels_py.gram_cd."""
    cdef Py_ssize_t nw = theta.shape[0]
    cdef Py_ssize_t i, j
    cdef double half_lam = 0.5 * lam
    obj_arr = np.empty(max_sweeps)
    cdef double[::1] objectives = obj_arr
    cdef int sweeps = 0
    cdef bint converged = False
    cdef double rho, old, new, delta, max_delta, obj

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
                for j in range(nw):
                    s[j] += gram[i, j] * delta
                theta[i] = new
                if fabs(delta) > max_delta:
                    max_delta = fabs(delta)
        obj = 0.0
        for i in range(nw):
            obj += theta[i] * s[i] - 2.0 * q[i] * theta[i] + lam * fabs(theta[i])
        objectives[sweeps] = obj
        sweeps += 1
        if max_delta < coord_tol:
            converged = True
            break
    return sweeps, converged, obj_arr[:sweeps].copy()


def simulate_path(const cnp.int64_t[::1] parent, const cnp.int64_t[::1] var,
                  const double[:, ::1] coef, const double[:, ::1] trans_cum,
                  const double[::1] pi_cum, const double[:, ::1] u,
                  const double[::1] mode_u, const double[::1] noise,
                  int n_a, int n_b, double guard):
    """Mode chain plus NARX recursion; see _kernels_py.simulate_path."""
    cdef Py_ssize_t n_steps = u.shape[0]
    cdef Py_ssize_t q = u.shape[1]
    cdef Py_ssize_t n_terms = parent.shape[0]
    cdef Py_ssize_t n_modes = trans_cum.shape[0]
    cdef Py_ssize_t p = n_a + q * n_b
    y_arr = np.empty(n_steps)
    z_arr = np.empty(n_steps, dtype=np.int64)
    x_arr = np.empty(p)
    terms_arr = np.empty(n_terms)
    cdef double[::1] y = y_arr
    cdef cnp.int64_t[::1] z = z_arr
    cdef double[::1] x = x_arr
    cdef double[::1] terms = terms_arr
    cdef Py_ssize_t k, lag, c, t, base
    cdef Py_ssize_t s
    cdef double acc, yk

    terms[0] = 1.0
    for k in range(n_steps):
        s = 0
        if k == 0:
            while s < n_modes - 1 and mode_u[k] >= pi_cum[s]:
                s += 1
        else:
            while s < n_modes - 1 and mode_u[k] >= trans_cum[z[k - 1], s]:
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
        if not fabs(yk) <= guard:
            raise OverflowError(
                f"trajectory diverged: |y| > {guard:g} at step {k} (mode {s + 1})"
            )
        y[k] = yk
    return y_arr, z_arr
