"""Compiled inner loop for the fixed-step integrator.

The kernel advances a whole batch of states a given number of RK4 steps in
place; recording happens in Python between calls.  Everything falls back to
the pure-numpy right-hand side when numba is unavailable.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap


@njit(cache=True)
def _rhs_fill(out, state, W, v_sum, omega, delta, gamma, r_ho):
    B, dim = state.shape
    m = dim // 3
    for b in range(B):
        for i in range(m):
            n_i = state[b, i]
            x_i = state[b, m + i]
            y_i = state[b, 2 * m + i]
            shift = 0.0
            for j in range(m):
                shift += W[b, i, j] * state[b, j]
            if r_ho != 0.0:
                shift += r_ho * v_sum[b, i] * n_i * n_i
            rot = delta - shift
            out[b, i] = omega * y_i - gamma * n_i
            out[b, m + i] = -0.5 * gamma * x_i + rot * y_i
            out[b, 2 * m + i] = -0.5 * gamma * y_i - rot * x_i - 0.5 * omega * (2.0 * n_i - 1.0)


@njit(cache=True)
def rk4_advance(state, W, v_sum, omega, delta, gamma, r_ho, dt, n_steps):
    """Advance `state` (B, 3m) by n_steps RK4 steps in place.

    Returns False as soon as a non-finite value appears (state then holds the
    offending step), True otherwise.
    """
    B, dim = state.shape
    k1 = np.empty((B, dim))
    k2 = np.empty((B, dim))
    k3 = np.empty((B, dim))
    k4 = np.empty((B, dim))
    tmp = np.empty((B, dim))
    half = 0.5 * dt
    sixth = dt / 6.0
    for _ in range(n_steps):
        _rhs_fill(k1, state, W, v_sum, omega, delta, gamma, r_ho)
        for b in range(B):
            for d in range(dim):
                tmp[b, d] = state[b, d] + half * k1[b, d]
        _rhs_fill(k2, tmp, W, v_sum, omega, delta, gamma, r_ho)
        for b in range(B):
            for d in range(dim):
                tmp[b, d] = state[b, d] + half * k2[b, d]
        _rhs_fill(k3, tmp, W, v_sum, omega, delta, gamma, r_ho)
        for b in range(B):
            for d in range(dim):
                tmp[b, d] = state[b, d] + dt * k3[b, d]
        _rhs_fill(k4, tmp, W, v_sum, omega, delta, gamma, r_ho)
        ok = True
        for b in range(B):
            for d in range(dim):
                state[b, d] += sixth * (k1[b, d] + 2.0 * (k2[b, d] + k3[b, d]) + k4[b, d])
                if not np.isfinite(state[b, d]):
                    ok = False
        if not ok:
            return False
    return True
