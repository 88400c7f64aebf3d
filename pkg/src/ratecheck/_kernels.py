"""Compiled per-sample losses and the SGD / full-gradient inner loops.

All trajectory arithmetic lives here so that replay audits can re-evaluate
single updates through the exact same floating point operations the driver
used.  Kernels are plain IEEE float64 (no fastmath), which keeps runs
bit-reproducible.

Objective kind codes:
    0  least_squares   f(w; x, y) = 0.5 * (<w, x> - y)^2
    1  logistic        f(w; x, y) = log(1 + exp(-y <w, x>)),  y in {-1, +1}
    2  qnorm_hinge     f(w; x, y) = max(0, 1 - y <w, x>)^q,   q in [1, 2]
    3  pl_1d_sine      f(w; y)    = (w - y)^2 + sin^2(w - y)
    4  qg_1d_quartic   f(w; y)    = (w^2 - y)^2

Step schedule codes:
    0  constant(eta)            eta_t = s0
    1  inverse_time(mu, t0)     eta_t = 2 / (s0 * (t + s1))
    2  polynomial(eta1, theta)  eta_t = s0 * t^(-s1)
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

KIND_LEAST_SQUARES = 0
KIND_LOGISTIC = 1
KIND_QNORM_HINGE = 2
KIND_PL_1D_SINE = 3
KIND_QG_1D_QUARTIC = 4

SCHED_CONSTANT = 0
SCHED_INVERSE_TIME = 1
SCHED_POLYNOMIAL = 2


@njit(cache=True)
def step_size_kernel(sched_kind, s0, s1, t):
    if sched_kind == SCHED_INVERSE_TIME:
        return 2.0 / (s0 * (t + s1))
    if sched_kind == SCHED_POLYNOMIAL:
        return s0 * t ** (-s1)
    return s0


@njit(cache=True)
def loss_kernel(kind, q, x, y, w):
    if kind == KIND_PL_1D_SINE:
        v = w[0] - y
        return v * v + math.sin(v) ** 2
    if kind == KIND_QG_1D_QUARTIC:
        v = w[0] * w[0] - y
        return v * v
    m = 0.0
    for a in range(w.shape[0]):
        m += w[a] * x[a]
    if kind == KIND_LEAST_SQUARES:
        r = m - y
        return 0.5 * r * r
    if kind == KIND_LOGISTIC:
        u = y * m
        if u >= 0.0:
            return math.log1p(math.exp(-u))
        return -u + math.log1p(math.exp(u))
    # qnorm_hinge
    u = 1.0 - y * m
    if u <= 0.0:
        return 0.0
    return u**q


@njit(cache=True)
def grad_kernel(kind, q, x, y, w, out):
    """Gradient of f with respect to w, written into ``out``."""
    if kind == KIND_PL_1D_SINE:
        v = w[0] - y
        out[0] = 2.0 * v + math.sin(2.0 * v)
        return
    if kind == KIND_QG_1D_QUARTIC:
        v = w[0] * w[0] - y
        out[0] = 4.0 * w[0] * v
        return
    m = 0.0
    for a in range(w.shape[0]):
        m += w[a] * x[a]
    if kind == KIND_LEAST_SQUARES:
        r = m - y
        for a in range(w.shape[0]):
            out[a] = r * x[a]
        return
    if kind == KIND_LOGISTIC:
        u = y * m
        # -y * sigmoid(-u) * x, computed stably for either sign of u
        if u >= 0.0:
            s = math.exp(-u) / (1.0 + math.exp(-u))
        else:
            s = 1.0 / (1.0 + math.exp(u))
        c = -y * s
        for a in range(w.shape[0]):
            out[a] = c * x[a]
        return
    # qnorm_hinge: subgradient at the kink is the zero-side limit
    u = 1.0 - y * m
    if u <= 0.0:
        for a in range(w.shape[0]):
            out[a] = 0.0
        return
    # q = 1.5 is the workhorse exponent; sqrt is far cheaper than pow
    if q == 1.5:
        c = -q * math.sqrt(u) * y
    else:
        c = -q * u ** (q - 1.0) * y
    for a in range(w.shape[0]):
        out[a] = c * x[a]


@njit(cache=True)
def sgd_chunk(kind, q, X, Y, idx, sched_kind, s0, s1, w, t_start, guard_sq, wstar, max_dev_sq, record):
    """Run len(idx) SGD steps in place on w.

    ``t_start`` is the 1-based step number of the first update.  Returns
    (status, bad_t, max_dev_sq) with status 0 on success and 1 when an
    iterate is non-finite or leaves the guard ball of squared radius
    ``guard_sq``.  When ``record`` is non-empty it receives the iterate
    after each step: record[k] = w_{t_start + k + 1}.

    The gradient arithmetic mirrors grad_kernel operation for operation
    (rows are indexed directly because per-step row views dominate the
    runtime); replay audits through grad_kernel stay bit-exact.
    """
    d = w.shape[0]
    for k in range(idx.shape[0]):
        t = t_start + k
        eta = step_size_kernel(sched_kind, s0, s1, float(t))
        j = idx[k]
        if kind <= KIND_QNORM_HINGE:
            # linear-model kinds: grad f = coef * x
            m = 0.0
            for a in range(d):
                m += w[a] * X[j, a]
            y = Y[j]
            if kind == KIND_LEAST_SQUARES:
                coef = m - y
            elif kind == KIND_LOGISTIC:
                u = y * m
                if u >= 0.0:
                    s = math.exp(-u) / (1.0 + math.exp(-u))
                else:
                    s = 1.0 / (1.0 + math.exp(u))
                coef = -y * s
            else:
                u = 1.0 - y * m
                if u <= 0.0:
                    coef = 0.0
                elif q == 1.5:
                    coef = -q * math.sqrt(u) * y
                else:
                    coef = -q * u ** (q - 1.0) * y
            norm_sq = 0.0
            dev_sq = 0.0
            for a in range(d):
                wa = w[a] - eta * (coef * X[j, a])
                w[a] = wa
                norm_sq += wa * wa
                dv = wa - wstar[a]
                dev_sq += dv * dv
        else:
            if kind == KIND_PL_1D_SINE:
                v = w[0] - Y[j]
                g0 = 2.0 * v + math.sin(2.0 * v)
            else:
                v = w[0] * w[0] - Y[j]
                g0 = 4.0 * w[0] * v
            wa = w[0] - eta * g0
            w[0] = wa
            norm_sq = wa * wa
            dv = wa - wstar[0]
            dev_sq = dv * dv
        if dev_sq > max_dev_sq:
            max_dev_sq = dev_sq
        if record.shape[0] > 0:
            for a in range(d):
                record[k, a] = w[a]
        # a NaN coordinate fails the <= comparison along with guard escapes
        if not (norm_sq <= guard_sq):
            return 1, t, max_dev_sq
    return 0, 0, max_dev_sq


@njit(cache=True)
def empirical_risk_kernel(kind, q, X, Y, w):
    s = 0.0
    for i in range(X.shape[0]):
        s += loss_kernel(kind, q, X[i], Y[i], w)
    return s / X.shape[0]


@njit(cache=True)
def empirical_grad_kernel(kind, q, X, Y, w, out):
    d = w.shape[0]
    g = np.empty(d, dtype=np.float64)
    for a in range(d):
        out[a] = 0.0
    for i in range(X.shape[0]):
        grad_kernel(kind, q, X[i], Y[i], w, g)
        for a in range(d):
            out[a] += g[a]
    for a in range(d):
        out[a] /= X.shape[0]


@njit(cache=True)
def gd_kernel(kind, q, X, Y, w0, step, tol, max_iter):
    """Full-batch gradient descent with a fixed step.

    Returns (w, grad_norm, iterations).  Stops when the empirical gradient
    norm drops to ``tol`` or the iteration cap is reached.
    """
    d = w0.shape[0]
    w = w0.copy()
    g = np.empty(d, dtype=np.float64)
    it = 0
    while it < max_iter:
        empirical_grad_kernel(kind, q, X, Y, w, g)
        norm = 0.0
        for a in range(d):
            norm += g[a] * g[a]
        norm = math.sqrt(norm)
        if norm <= tol:
            return w, norm, it
        for a in range(d):
            w[a] = w[a] - step * g[a]
        it += 1
    empirical_grad_kernel(kind, q, X, Y, w, g)
    norm = 0.0
    for a in range(d):
        norm += g[a] * g[a]
    return w, math.sqrt(norm), it
