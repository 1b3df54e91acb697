"""Independent reference computations used by the tests.

Nothing here calls into the package's numerical code: closed-form integrals,
an exact zero-order-hold simulator built on a hand-rolled matrix exponential,
and the benchmark functions.
"""
import math

import numpy as np

CRITERIA = ("SHIFTED_ITAE", "ITAE", "IAE", "ISE", "ITSE")


# -- closed-form criterion integrals ------------------------------------------

def _poly_weight(crit):
    # T(tau) as polynomial coefficients (ascending)
    return {"SHIFTED_ITAE": [1.0, 1.0], "ITAE": [0.0, 1.0], "ITSE": [0.0, 1.0]}.get(crit, [1.0])


def _squared(crit):
    return crit in ("ISE", "ITSE")


def _lower(crit, t0):
    return t0 if crit == "SHIFTED_ITAE" else 0.0


def polynomial_error_integral(coeffs, crit, t0, t):
    """Exact integral for a nonnegative polynomial error ``e(tau) = sum c_j tau^j``."""
    P = np.polynomial.Polynomial
    e = P(coeffs)
    integrand = P(_poly_weight(crit)) * (e * e if _squared(crit) else e)
    F = integrand.integ()
    return F(t) - F(_lower(crit, t0))


def exponential_error_integral(amp, rate, crit, t0, t):
    """Exact integral for ``e(tau) = amp * exp(-rate * tau)``."""
    if _squared(crit):
        amp, rate = amp * amp, 2.0 * rate

    def anti(tau):
        # antiderivatives of e^{-k tau} and tau e^{-k tau}
        ex = math.exp(-rate * tau)
        i0 = -ex / rate
        i1 = -ex * (tau / rate + 1.0 / rate**2)
        w = _poly_weight(crit)
        return amp * (w[0] * i0 + (w[1] if len(w) > 1 else 0.0) * i1)

    return anti(t) - anti(_lower(crit, t0))


# -- exact-ZOH sampled-data closed loop ----------------------------------------

def expm(M):
    """Matrix exponential by scaling and squaring of a truncated Taylor series."""
    M = np.asarray(M, dtype=float)
    norm = np.abs(M).sum(axis=1).max()
    s = max(0, int(math.ceil(math.log2(norm))) + 4) if norm > 0 else 0
    X = M / 2.0**s
    E = np.eye(len(M))
    term = np.eye(len(M))
    for k in range(1, 20):
        term = term @ X / k
        E = E + term
    for _ in range(s):
        E = E @ E
    return E


def fine_grid_shifted_itae(spec, gains_matrix, sub=10, shift=None):
    """Shifted-ITAE objective of a linear testbed, integrated on a grid ``dt / sub``.

    The controllers update every ``dt`` and hold their output; the plant is
    propagated exactly between fine grid points and the criterion is a
    left-rectangle sum. Saturation and output nonlinearity are not supported.
    """
    assert np.all(~np.isfinite(spec.saturation_lo)) and np.all(spec.output_quadratic == 0)
    dt = spec.dt
    h = dt / sub
    s, k = spec.state_dim, spec.k
    M = np.zeros((s + k, s + k))
    M[:s, :s] = spec.A * h
    M[:s, s:] = spec.B * h
    E = expm(M)
    Ad, Bd = E[:s, :s], E[:s, s:]
    t0 = 0.2 * spec.horizon if shift is None else shift
    g = np.asarray(gains_matrix, dtype=float)
    x = spec.initial_state.copy()
    acc = np.zeros(k)
    prev = np.zeros(k)
    total = np.zeros(k)
    n = int(round(spec.horizon / dt))
    for j in range(n):
        e = spec.targets - spec.Cout @ x
        deriv = (e - prev) / dt if j > 0 else np.zeros(k)
        u = g[:, 0] * e + g[:, 1] * (acc + e * dt) + g[:, 2] * deriv
        acc = acc + e * dt
        prev = e
        for q in range(sub):
            tau = (j * sub + q) * h
            if tau >= t0 - 1e-12:
                total += (tau + 1.0) * np.abs(spec.Cout @ x - spec.targets) * h
            x = Ad @ x + Bd @ u
    return float(np.sum(total / np.abs(spec.targets)))


# -- benchmark functions -----------------------------------------------------

def sphere(x):
    x = np.asarray(x, dtype=float)
    return float(x @ x)


def rosenbrock(x):
    x = np.asarray(x, dtype=float)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


class ShiftedRastrigin:
    def __init__(self, shift):
        self.shift = np.asarray(shift, dtype=float)

    def __call__(self, x):
        z = np.asarray(x, dtype=float) - self.shift
        return float(10.0 * z.size + np.sum(z * z - 10.0 * np.cos(2.0 * np.pi * z)))


RASTRIGIN_SHIFT = np.random.default_rng(2024).uniform(-2.0, 2.0, 10)
