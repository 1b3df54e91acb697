"""Elitist active CMA-ES with CSA or TPA step-size control.

Strategy constants follow Hansen's CMA-ES tutorial (weights, learning rates,
the h_sigma stall gate, negative weights for the active update). Retained
elitist parents take part in ranking and in the mean update only; the
evolution paths and the covariance update use the steps sampled this
generation.

Used through an ask/tell loop::

    es = CmaEs(np.zeros(d), 1.0, CmaParams.default(d), rng)
    while ...:
        X = es.ask()
        es.tell(X, [f(x) for x in X])
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError

STEP_ADAPTATIONS = ("CSA", "TPA")


class NumericalBreakdown(RuntimeError):
    """Covariance factorization failed even after positive-definiteness repair."""


def default_population_size(d: int) -> int:
    if d < 1:
        raise ConfigError(f"dimension must be >= 1, got {d}")
    return 4 + int(math.floor(3.0 * math.log(d)))


def expected_norm(d: int) -> float:
    """Approximation of E||N(0, I_d)||."""
    return math.sqrt(d) * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d))


@dataclass
class CmaParams:
    d: int
    lam: int
    mu: int
    weights: np.ndarray  # length lam: positive for the best mu, <= 0 afterwards
    mu_eff: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c1: float
    c_mu: float
    elitist: bool = True
    active: bool = True
    step_adaptation: str = "CSA"
    tpa_alpha: float = 0.5
    chi_n: float = field(init=False)

    def __post_init__(self):
        if self.lam < 2 or not 1 <= self.mu <= self.lam:
            raise ConfigError(f"need lambda >= 2 and 1 <= mu <= lambda, got {self.lam}, {self.mu}")
        if self.step_adaptation not in STEP_ADAPTATIONS:
            raise ConfigError(f"step_adaptation must be one of {STEP_ADAPTATIONS}")
        self.chi_n = expected_norm(self.d)

    @property
    def positive_weights(self) -> np.ndarray:
        return self.weights[: self.mu]

    @property
    def tpa_rate(self) -> float:
        return 1.0 / self.d_sigma

    @classmethod
    def default(
        cls,
        d: int,
        lam: Optional[int] = None,
        mu: Optional[int] = None,
        elitist: bool = True,
        active: bool = True,
        step_adaptation: str = "CSA",
    ) -> "CmaParams":
        lam = default_population_size(d) if lam is None else int(lam)
        mu = lam // 2 if mu is None else int(mu)
        if lam < 2 or not 1 <= mu <= lam:
            raise ConfigError(f"need lambda >= 2 and 1 <= mu <= lambda, got {lam}, {mu}")
        ranks = np.arange(1, lam + 1, dtype=float)
        pos = math.log(mu + 0.5) - np.log(ranks[:mu])
        neg = np.minimum(0.0, math.log((lam + 1) / 2.0) - np.log(ranks[mu:]))
        mu_eff = pos.sum() ** 2 / np.sum(pos ** 2)

        c1 = 2.0 / ((d + 1.3) ** 2 + mu_eff)
        c_mu = min(1.0 - c1, 2.0 * (0.25 + mu_eff + 1.0 / mu_eff - 2.0) / ((d + 2.0) ** 2 + mu_eff))
        c_sigma = (mu_eff + 2.0) / (d + mu_eff + 5.0)
        d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (d + 1.0)) - 1.0) + c_sigma
        c_c = (4.0 + mu_eff / d) / (d + 4.0 + 2.0 * mu_eff / d)

        weights = np.zeros(lam)
        weights[:mu] = pos / pos.sum()
        if active and np.any(neg < 0) and c_mu > 0:
            mu_eff_neg = neg.sum() ** 2 / np.sum(neg ** 2)
            alpha = min(
                1.0 + c1 / c_mu,
                1.0 + 2.0 * mu_eff_neg / (mu_eff + 2.0),
                (1.0 - c1 - c_mu) / (d * c_mu),
            )
            weights[mu:] = alpha * neg / np.abs(neg).sum()
        return cls(
            d=d, lam=lam, mu=mu, weights=weights, mu_eff=mu_eff, c_sigma=c_sigma, d_sigma=d_sigma,
            c_c=c_c, c1=c1, c_mu=c_mu, elitist=elitist, active=active, step_adaptation=step_adaptation,
        )


@dataclass
class CmaState:
    mean: np.ndarray
    sigma: float
    C: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    generation: int = 0
    parents: list = field(default_factory=list)  # [(point, value)] retained for elitism
    best_history: deque = field(default_factory=lambda: deque(maxlen=10_000))
    previous_mean: Optional[np.ndarray] = None
    sigma0: float = 1.0

    @classmethod
    def initial(cls, mean, sigma: float) -> "CmaState":
        mean = np.array(mean, dtype=float)
        d = mean.size
        return cls(mean=mean, sigma=float(sigma), C=np.eye(d), p_sigma=np.zeros(d), p_c=np.zeros(d), sigma0=float(sigma))


# -- linear algebra helpers ---------------------------------------------

def pd_floor(C: np.ndarray) -> float:
    return 1e-20 * np.trace(C) / C.shape[0]


def repair_pd(C: np.ndarray) -> tuple[np.ndarray, bool]:
    """Symmetrize and lift the spectrum so the smallest eigenvalue clears the floor."""
    C = 0.5 * (C + C.T)
    floor = pd_floor(C)
    ev = np.linalg.eigvalsh(C)
    lo, hi = float(ev[0]), float(ev[-1])
    if lo > floor:
        return C, False
    # margin must survive the rounding of adding the shift to the spectrum
    eps = max(floor, 1e-12 * abs(lo), 1e-14 * abs(hi), 1e-300)
    return C + (floor - lo + eps) * np.eye(C.shape[0]), True


def cholesky_lower(C: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        C2, _ = repair_pd(C)
        try:
            return np.linalg.cholesky(C2)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("Cholesky factorization failed after PD repair") from exc


def inv_sqrt(C: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(C)
    vals = np.maximum(vals, pd_floor(C))
    return (vecs / np.sqrt(vals)) @ vecs.T


# -- the individual update steps ------------------------------------------

def sample_population(state: CmaState, params: CmaParams, rng: np.random.Generator) -> np.ndarray:
    L = cholesky_lower(state.C)
    Z = rng.standard_normal((params.lam, params.d))
    return state.mean + state.sigma * (Z @ L.T)


def rank_with_elitism(population, previous_parents, elitist: bool):
    """Sort ``(point, value)`` pairs ascending by value.

    In elitist mode the previous parents join the ranking and win ties;
    remaining ties keep sampling order.
    """
    pool = [(v, 1, i, x) for i, (x, v) in enumerate(population)]
    if elitist:
        pool += [(v, 0, i, x) for i, (x, v) in enumerate(previous_parents)]
    pool.sort(key=lambda t: (t[0], t[1], t[2]))
    return [(x, v) for v, _, _, x in pool]


def update_mean(sorted_points, params: CmaParams, m_old):
    X = np.asarray([p for p in sorted_points[: params.mu]], dtype=float)
    return params.positive_weights @ X, np.asarray(m_old, dtype=float)


def update_paths(state: CmaState, m_new, m_old, params: CmaParams, C_inv_sqrt=None):
    """Return ``(p_sigma', p_c', h_sigma)``."""
    y = (np.asarray(m_new) - np.asarray(m_old)) / state.sigma
    if C_inv_sqrt is None:
        C_inv_sqrt = inv_sqrt(state.C)
    cs, cc = params.c_sigma, params.c_c
    p_sigma = (1.0 - cs) * state.p_sigma + math.sqrt(cs * (2.0 - cs) * params.mu_eff) * (C_inv_sqrt @ y)
    norm = np.linalg.norm(p_sigma) / math.sqrt(1.0 - (1.0 - cs) ** (2 * (state.generation + 1)))
    h_sigma = norm < (1.4 + 2.0 / (params.d + 1.0)) * params.chi_n
    p_c = (1.0 - cc) * state.p_c + (math.sqrt(cc * (2.0 - cc) * params.mu_eff) * y if h_sigma else 0.0)
    return p_sigma, p_c, bool(h_sigma)


def update_covariance_active(
    state: CmaState, sorted_current, m_old, params: CmaParams, p_c, h_sigma: bool = True, C_inv_sqrt=None
) -> np.ndarray:
    """Rank-one + rank-mu update with negative weights on the worst steps, then PD repair.

    ``sorted_current`` are this generation's samples sorted best-first.
    """
    C = state.C
    d = params.d
    Y = (np.asarray(sorted_current, dtype=float) - np.asarray(m_old)) / state.sigma
    w = params.weights[: Y.shape[0]].copy()
    if not params.active:
        w = np.maximum(w, 0.0)
    neg = w < 0
    if np.any(neg):
        if C_inv_sqrt is None:
            C_inv_sqrt = inv_sqrt(C)
        sq = np.sum((Y[neg] @ C_inv_sqrt.T) ** 2, axis=1)
        w_eff = w.copy()
        w_eff[neg] = w[neg] * d / np.maximum(sq, 1e-300)
    else:
        w_eff = w
    c1, cmu = params.c1, params.c_mu
    delta_h = (0.0 if h_sigma else 1.0) * params.c_c * (2.0 - params.c_c)
    decay = 1.0 + c1 * delta_h - c1 - cmu * w.sum()
    rank_mu = (Y * w_eff[:, None]).T @ Y
    C_new = decay * C + c1 * np.outer(p_c, p_c) + cmu * rank_mu
    C_new, _ = repair_pd(C_new)
    return C_new


def update_step_size_csa(state: CmaState, p_sigma, params: CmaParams) -> float:
    ratio = np.linalg.norm(p_sigma) / params.chi_n
    return state.sigma * math.exp((params.c_sigma / params.d_sigma) * (ratio - 1.0))


def tpa_factor(f_long: float, f_short: float, rate: float) -> float:
    # ties count as "shorter is better"
    return math.exp(rate) if f_long < f_short else math.exp(-rate)


def tpa_points(m_new, m_old, alpha: float = 0.5):
    shift = np.asarray(m_new, dtype=float) - np.asarray(m_old, dtype=float)
    if not np.any(shift):
        return None
    return m_new + alpha * shift, m_new - alpha * shift


def update_step_size_tpa(
    state: CmaState, m_new, m_old, params: CmaParams, objective: Callable
) -> tuple[float, int]:
    """Two-point line test along the last mean shift; returns ``(sigma', evaluations)``."""
    pts = tpa_points(m_new, m_old, params.tpa_alpha)
    if pts is None:
        return state.sigma, 0
    long_pt, short_pt = pts
    f_long, f_short = objective(long_pt), objective(short_pt)
    return state.sigma * tpa_factor(f_long, f_short, params.tpa_rate), 2


class CmaEs:
    """Ask/tell driver around :class:`CmaState`.

    With TPA, ``ask`` appends the two test points of the previous mean shift
    after the ``lam`` samples, and ``tell`` expects their values in the same slots.
    """

    def __init__(self, mean, sigma: float, params: CmaParams, rng: np.random.Generator):
        self.params = params
        self.state = CmaState.initial(mean, sigma)
        if self.state.mean.size != params.d:
            raise ConfigError("initial mean does not match the parameter dimension")
        self.rng = rng
        self._tpa_pending = False
        self.last_values: Optional[np.ndarray] = None

    def ask(self) -> np.ndarray:
        X = sample_population(self.state, self.params, self.rng)
        self._tpa_pending = False
        if self.params.step_adaptation == "TPA" and self.state.previous_mean is not None:
            pts = tpa_points(self.state.mean, self.state.previous_mean, self.params.tpa_alpha)
            if pts is not None:
                X = np.vstack([X, pts[0], pts[1]])
                self._tpa_pending = True
        return X

    def tell(self, X, values) -> None:
        p, st = self.params, self.state
        X = np.asarray(X, dtype=float)
        values = np.asarray(values, dtype=float)
        lam = p.lam
        if X.shape[0] != lam + (2 if self._tpa_pending else 0) or values.shape[0] != X.shape[0]:
            raise ValueError("tell() needs exactly the points returned by the last ask()")
        pop = list(zip(X[:lam], values[:lam]))
        self.last_values = values[:lam].copy()

        ranked = rank_with_elitism(pop, st.parents, p.elitist)
        m_old = st.mean.copy()
        m_new, _ = update_mean([x for x, _ in ranked], p, m_old)

        C_is = inv_sqrt(st.C)
        p_sigma, p_c, h_sigma = update_paths(st, m_new, m_old, p, C_is)
        order = np.argsort(values[:lam], kind="stable")
        C_new = update_covariance_active(st, X[:lam][order], m_old, p, p_c, h_sigma, C_is)

        if p.step_adaptation == "CSA":
            sigma = update_step_size_csa(st, p_sigma, p)
        elif self._tpa_pending:
            sigma = st.sigma * tpa_factor(values[lam], values[lam + 1], p.tpa_rate)
        else:
            sigma = st.sigma

        st.previous_mean = m_old
        st.mean = m_new
        st.p_sigma, st.p_c, st.C, st.sigma = p_sigma, p_c, C_new, sigma
        st.parents = [(x.copy(), float(v)) for x, v in ranked[: p.mu]]
        st.best_history.append(float(ranked[0][1]))
        st.generation += 1
        self._tpa_pending = False

    # -- diagnostics ------------------------------------------------------
    def condition_number(self) -> float:
        ev = np.linalg.eigvalsh(self.state.C)
        return float(ev[-1] / ev[0]) if ev[0] > 0 else math.inf

    def max_std(self) -> float:
        return self.state.sigma * math.sqrt(float(np.max(np.diag(self.state.C))))

    @property
    def best_parent(self):
        return self.state.parents[0] if self.state.parents else None
