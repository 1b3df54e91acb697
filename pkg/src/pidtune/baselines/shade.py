"""Restarted SHADE: success-history adaptive DE with current-to-pbest/1 and an archive.

The reference point only defines the box the initial population is drawn
from (``[-10 |s_i|, 10 |s_i|]`` per coordinate); later generations are unbounded.
A restart re-draws the population and resets the memories once more than
1000 evaluations were spent and the restart's best has not improved for
``50 * d`` evaluations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import ConfigError
from ..evaluation import Evaluator, RunRecord
from ..scaling import ScalingSpec

RESTART_MIN_EVALS = 1000
STAGNATION_PER_DIM = 50


@dataclass
class ShadeParams:
    pop_size: Optional[int] = None  # defaults to 2 d
    memory_size: Optional[int] = None  # defaults to pop_size
    p_best: float = 0.1
    init_cr: float = 0.5
    init_f: float = 0.5
    box_factor: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.p_best <= 1.0:
            raise ConfigError("p_best: must be in (0, 1]")
        if not (0.0 <= self.init_cr <= 1.0 and 0.0 < self.init_f <= 1.0):
            raise ConfigError("init_cr must be in [0, 1] and init_f in (0, 1]")
        if self.memory_size is not None and self.memory_size < 1:
            raise ConfigError("memory_size: must be >= 1")
        if not self.box_factor > 0:
            raise ConfigError("box_factor: must be positive")


@dataclass
class ShadeState:
    population: np.ndarray
    values: np.ndarray
    m_cr: np.ndarray
    m_f: np.ndarray
    memory_index: int = 0
    archive: list = field(default_factory=list)
    best_point: Optional[np.ndarray] = None
    best_value: float = np.inf
    evals_since_best_update: int = 0
    p_best: float = 0.1

    @property
    def size(self) -> int:
        return self.population.shape[0]

    def note(self, x, value: float) -> None:
        """Track one evaluation against the best-so-far of this restart."""
        if value < self.best_value:
            self.best_value = float(value)
            self.best_point = np.array(x, dtype=float)
            self.evals_since_best_update = 0
        else:
            self.evals_since_best_update += 1


def init_box(reference: ScalingSpec, factor: float = 10.0):
    a = -factor * reference.reference
    b = factor * reference.reference
    return np.minimum(a, b), np.maximum(a, b)


def shade_init_population(reference: ScalingSpec, pop_size: int, rng: np.random.Generator, factor: float = 10.0):
    if pop_size < 4:
        raise ConfigError("SHADE needs a population of at least 4")
    lo, hi = init_box(reference, factor)
    return lo + (hi - lo) * rng.uniform(size=(pop_size, reference.dim))


def new_state(points, values, params: ShadeParams) -> ShadeState:
    H = params.memory_size or points.shape[0]
    st = ShadeState(
        population=np.asarray(points, dtype=float),
        values=np.asarray(values, dtype=float),
        m_cr=np.full(H, params.init_cr),
        m_f=np.full(H, params.init_f),
        p_best=params.p_best,
    )
    for x, v in zip(st.population, st.values):
        st.note(x, v)
    return st


def _sample_f(mean: float, rng: np.random.Generator) -> float:
    while True:
        f = mean + 0.1 * rng.standard_cauchy()
        if f > 0:
            return min(f, 1.0)


def _lehmer(weights, values) -> float:
    den = float(np.sum(weights * values))
    if den == 0.0:
        return 0.0
    return float(np.sum(weights * values * values) / den)


def shade_step(state: ShadeState, evaluate: Callable, rng: np.random.Generator) -> ShadeState:
    """One generation: trial generation, batch evaluation, greedy selection, memory update.

    ``evaluate`` maps an array of points to values and may return fewer values
    than points when the budget runs out; only the evaluated trials take part.
    """
    N, d = state.population.shape
    if N < 4:
        raise ConfigError("SHADE needs a population of at least 4")
    H = state.m_cr.size
    n_pbest = max(2, int(round(state.p_best * N)))
    order = np.argsort(state.values, kind="stable")
    archive = np.array(state.archive).reshape(-1, d)
    union = np.vstack([state.population, archive])

    trials = np.empty_like(state.population)
    crs = np.empty(N)
    fs = np.empty(N)
    for i in range(N):
        r = rng.integers(H)
        crs[i] = np.clip(rng.normal(state.m_cr[r], 0.1), 0.0, 1.0)
        fs[i] = _sample_f(state.m_f[r], rng)
        pb = order[rng.integers(n_pbest)]
        r1 = rng.integers(N - 1)
        r1 += r1 >= i
        while True:
            r2 = rng.integers(union.shape[0])
            if r2 != i and r2 != r1:
                break
        x = state.population[i]
        mutant = x + fs[i] * (state.population[pb] - x) + fs[i] * (state.population[r1] - union[r2])
        mask = rng.uniform(size=d) < crs[i]
        mask[rng.integers(d)] = True
        trials[i] = np.where(mask, mutant, x)

    f_trials = evaluate(trials)
    pop = state.population.copy()
    vals = state.values.copy()
    new_archive = list(state.archive)
    s_cr, s_f, delta = [], [], []
    for i, ft in enumerate(f_trials):
        state.note(trials[i], ft)
        if ft <= vals[i]:
            if ft < vals[i]:
                new_archive.append(pop[i].copy())
                s_cr.append(crs[i])
                s_f.append(fs[i])
                delta.append(vals[i] - ft)
            pop[i] = trials[i]
            vals[i] = ft
    while len(new_archive) > N:
        new_archive.pop(int(rng.integers(len(new_archive))))

    m_cr, m_f, k = state.m_cr.copy(), state.m_f.copy(), state.memory_index
    if s_cr:
        w = np.asarray(delta) / np.sum(delta)
        m_cr[k] = _lehmer(w, np.asarray(s_cr))
        m_f[k] = _lehmer(w, np.asarray(s_f))
        k = (k + 1) % H
    return ShadeState(
        population=pop, values=vals, m_cr=m_cr, m_f=m_f, memory_index=k, archive=new_archive,
        best_point=state.best_point, best_value=state.best_value,
        evals_since_best_update=state.evals_since_best_update, p_best=state.p_best,
    )


def shade_restart_check(state: ShadeState, total_evals: int, d: int) -> bool:
    return total_evals > RESTART_MIN_EVALS and state.evals_since_best_update >= STAGNATION_PER_DIM * d


def run_shade(
    objective: Callable,
    reference: ScalingSpec,
    budget: int = 10000,
    target: Optional[float] = None,
    seed: int = 0,
    params: Optional[ShadeParams] = None,
    map_fn: Callable = map,
) -> RunRecord:
    params = params or ShadeParams()
    d = reference.dim
    N = params.pop_size or 2 * d
    if budget < 1:
        raise ConfigError("budget must be >= 1")
    ev = Evaluator(objective, budget, target, None, map_fn=map_fn)
    log = []
    restart = 0
    while ev.stop_reason() is None:
        rng = np.random.default_rng([int(seed), restart, 3])
        start = ev.evals
        pts = shade_init_population(reference, N, rng, params.box_factor)
        vals = ev.evaluate(pts)
        pts = pts[: len(vals)]
        if len(vals) < 4:
            break
        state = new_state(pts, vals, params)
        reason = None
        while ev.stop_reason() is None:
            state = shade_step(state, ev.evaluate, rng)
            if shade_restart_check(state, ev.evals, d):
                reason = "Stagnation"
                break
        log.append({"restart_index": restart, "regime": None, "lambda": N, "sigma0": None,
                    "evals": ev.evals - start, "best": state.best_value,
                    "stop_reason": reason or ev.stop_reason()})
        restart += 1
    return ev.record("shade", seed, ev.stop_reason(), log)
