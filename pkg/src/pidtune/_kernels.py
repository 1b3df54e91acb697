"""Compiled inner loops for the closed-loop simulator.

Kept free of Python objects so numba can compile them in nopython mode.
fastmath stays off: traces must be bit-identical across calls and processes.
Loops are written out by hand; the matrices are tiny and allocation dominates otherwise.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _deriv(A, Bu, x, out):
    s = x.shape[0]
    for r in range(s):
        acc = Bu[r]
        for c in range(s):
            acc += A[r, c] * x[c]
        out[r] = acc


@njit(cache=True)
def _rk4_inplace(A, B, x, u, dt, bu, k1, k2, k3, k4, tmp):
    s = x.shape[0]
    k = u.shape[0]
    for r in range(s):
        acc = 0.0
        for c in range(k):
            acc += B[r, c] * u[c]
        bu[r] = acc
    _deriv(A, bu, x, k1)
    for r in range(s):
        tmp[r] = x[r] + 0.5 * dt * k1[r]
    _deriv(A, bu, tmp, k2)
    for r in range(s):
        tmp[r] = x[r] + 0.5 * dt * k2[r]
    _deriv(A, bu, tmp, k3)
    for r in range(s):
        tmp[r] = x[r] + dt * k3[r]
    _deriv(A, bu, tmp, k4)
    for r in range(s):
        x[r] = x[r] + (dt / 6.0) * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r])


@njit(cache=True)
def rk4_step(A, B, x, u, dt):
    s = x.shape[0]
    out = x.copy()
    _rk4_inplace(A, B, out, u, dt, np.empty(s), np.empty(s), np.empty(s), np.empty(s), np.empty(s), np.empty(s))
    return out


@njit(cache=True)
def _output_inplace(Cout, quad, x, y):
    for i in range(y.shape[0]):
        acc = 0.0
        for c in range(x.shape[0]):
            acc += Cout[i, c] * x[c]
        y[i] = acc + quad[i] * acc * acc


@njit(cache=True)
def plant_output(Cout, quad, x):
    y = np.empty(Cout.shape[0])
    _output_inplace(Cout, quad, x, y)
    return y


@njit(cache=True)
def closed_loop(A, B, Cout, quad, lo, hi, x0, targets, gains, dt, n_steps):
    """Simulate ``n_steps`` PID-controlled steps.

    Returns the (n_steps + 1, n) output array and the number of valid rows.
    A row count below ``n_steps + 1`` marks divergence at that index.
    """
    n = targets.shape[0]
    k = gains.shape[0]
    s = x0.shape[0]
    out = np.empty((n_steps + 1, n))
    x = x0.copy()
    y = np.empty(n)
    integral = np.zeros(k)
    prev_err = np.zeros(k)
    u = np.empty(k)
    bu = np.empty(s)
    k1 = np.empty(s)
    k2 = np.empty(s)
    k3 = np.empty(s)
    k4 = np.empty(s)
    tmp = np.empty(s)
    for j in range(n_steps + 1):
        for r in range(s):
            if not np.isfinite(x[r]):
                return out, j
        _output_inplace(Cout, quad, x, y)
        for i in range(n):
            if not np.isfinite(y[i]):
                return out, j
            out[j, i] = y[i]
        if j == n_steps:
            break
        for i in range(k):
            err = targets[i] - y[i]
            integral[i] += err * dt
            deriv = 0.0
            if j > 0:
                deriv = (err - prev_err[i]) / dt
            prev_err[i] = err
            c = gains[i, 0] * err + gains[i, 1] * integral[i] + gains[i, 2] * deriv
            # NaN must survive the clamp so divergence is detected downstream
            if c < lo[i]:
                c = lo[i]
            elif c > hi[i]:
                c = hi[i]
            u[i] = c
        _rk4_inplace(A, B, x, u, dt, bu, k1, k2, k3, k4, tmp)
    return out, n_steps + 1
