"""BIPOP restart driver around the CMA-ES core.

Two interlacing regimes share the budget: regime 1 doubles the population at
every restart (IPOP), regime 2 draws small populations and step sizes. After
each restart the regime with fewer spent evaluations runs next.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .cmaes import CmaEs, CmaParams, NumericalBreakdown, default_population_size
from .errors import ConfigError
from .evaluation import BUDGET_EXHAUSTED, RESTART_CRITERION, Evaluator, RunRecord
from .scaling import ScalingSpec

RESTART_STRATEGIES = ("bipop", "ipop", "none")
# priority order used when several criteria fire in the same generation
CRITERIA_ORDER = ("TolFunHist", "TolFun", "ConditionCov", "TolSigma", "Stagnation")


@dataclass
class RestartCriteria:
    tol_fun_hist: float = 1e-12
    tol_fun: Optional[float] = None  # defaults to tol_fun_hist / 10
    history_window: Optional[int] = None  # defaults to 10 + ceil(30 d / lambda)
    condition_cap: float = 1e14
    tol_up_sigma: float = 1e20
    tol_x: float = 1e-14
    stagnation_window: Optional[int] = None  # defaults to 100 + ceil(100 d^1.5 / lambda)
    value_checks: bool = True

    def __post_init__(self):
        if self.tol_fun is None:
            self.tol_fun = self.tol_fun_hist / 10.0
        for name in ("tol_fun_hist", "tol_fun", "condition_cap", "tol_up_sigma", "tol_x"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    @classmethod
    def for_channels(cls, n: int, **kw) -> "RestartCriteria":
        """Plant-tuning defaults: ``tol_fun_hist = n / 2`` for ``n`` controlled channels."""
        kw.setdefault("tol_fun_hist", n / 2.0)
        return cls(**kw)

    def window(self, d: int, lam: int) -> int:
        if self.history_window is not None:
            return int(self.history_window)
        return 10 + math.ceil(30.0 * d / lam)

    def stagnation(self, d: int, lam: int) -> int:
        if self.stagnation_window is not None:
            return int(self.stagnation_window)
        return 100 + math.ceil(100.0 * d ** 1.5 / lam)


def check_restart(es: CmaEs, population_values, criteria: RestartCriteria) -> Optional[str]:
    """Name of the first firing restart criterion, or ``None``."""
    st, p = es.state, es.params
    hist = list(st.best_history)
    window = criteria.window(p.d, p.lam)
    full = len(hist) >= window
    recent = hist[-window:]
    values = np.asarray(population_values, dtype=float)
    if criteria.value_checks:
        if full and max(recent) - min(recent) < criteria.tol_fun_hist:
            return "TolFunHist"
        if values.size and values.max() - values.min() < criteria.tol_fun:
            return "TolFun"
        if full and max(recent) - min(recent) < criteria.tol_fun:
            return "TolFun"
    if es.condition_number() > criteria.condition_cap:
        return "ConditionCov"
    spread = st.sigma * math.sqrt(float(np.max(np.linalg.eigvalsh(st.C))))
    if not math.isfinite(spread) or spread > criteria.tol_up_sigma * st.sigma0 or spread < criteria.tol_x * st.sigma0:
        return "TolSigma"
    stag = criteria.stagnation(p.d, p.lam)
    if len(hist) >= stag:
        seg = max(1, int(0.2 * stag))
        if np.median(hist[-seg:]) >= np.median(hist[-stag : -stag + seg]):
            return "Stagnation"
    return None


@dataclass
class BipopState:
    lam_def: int
    count1: int = 0
    count2: int = 0
    n_large_restarts: int = 0
    regime: int = 1
    lam_large: int = 0
    max_large_restarts: int = 9
    restart_log: list = field(default_factory=list)

    def __post_init__(self):
        if not self.lam_large:
            self.lam_large = self.lam_def

    def charge(self, regime: int, evals: int) -> None:
        if regime == 1:
            self.count1 += evals
        else:
            self.count2 += evals


def bipop_next_config(state: BipopState, lam_def: int, rng: np.random.Generator):
    """Pick ``(regime, lambda, sigma0)`` for the next restart and update ``state``.

    Regime 1 doubles the large population (capped after ``max_large_restarts``
    doublings) with ``sigma0 = 1``. Regime 2 draws
    ``lambda = floor(lam_def * (lam_large / (2 lam_def)) ** (u ** 2))`` and
    ``sigma0 = 10 ** (-2 u')``.
    """
    if state.count1 < state.count2:
        state.regime = 1
        if state.n_large_restarts < state.max_large_restarts:
            state.n_large_restarts += 1
        state.lam_large = lam_def * 2 ** state.n_large_restarts
        return 1, state.lam_large, 1.0
    state.regime = 2
    u, u2 = rng.uniform(size=2)
    lam = int(math.floor(lam_def * (state.lam_large / (2.0 * lam_def)) ** (u * u)))
    return 2, max(lam, lam_def), 10.0 ** (-2.0 * u2)


def _restart_rng(seed: int, restart: int, stream: int) -> np.random.Generator:
    # one independent substream per (seed, restart, purpose)
    return np.random.default_rng([int(seed), int(restart), int(stream)])


def run(
    objective: Callable,
    scaling: ScalingSpec,
    criteria: Optional[RestartCriteria] = None,
    budget: int = 12000,
    target: Optional[float] = None,
    seed: int = 0,
    *,
    popsize: Optional[int] = None,
    mu: Optional[int] = None,
    elitist: bool = True,
    active: bool = True,
    step_adaptation: str = "CSA",
    restart_strategy: str = "bipop",
    max_large_restarts: int = 9,
    log_points: bool = False,
    map_fn: Callable = map,
    observer: Optional[Callable] = None,
    evaluator: Optional[Evaluator] = None,
) -> RunRecord:
    """Minimize ``objective`` over physical points ``|s| * v``, starting at ``v = 0``.

    Stops when the best value reaches ``target`` or the budget is spent. A
    generation that would overrun the budget is evaluated only up to it.
    ``observer(es, regime)`` is called after every ``tell`` (diagnostics only).
    """
    criteria = RestartCriteria() if criteria is None else criteria
    if restart_strategy not in RESTART_STRATEGIES:
        raise ConfigError(f"restart_strategy must be one of {RESTART_STRATEGIES}")
    d = scaling.dim
    lam_def = default_population_size(d)
    lam0 = lam_def if popsize is None else int(popsize)
    mu_ratio = 0.5 if mu is None else mu / lam0
    if budget < lam_def:
        raise ConfigError(f"budget {budget} is smaller than the default population size {lam_def}")
    ev = evaluator or Evaluator(objective, budget, target, scaling, log_points=log_points, map_fn=map_fn)
    bipop = BipopState(lam_def=lam0, max_large_restarts=max_large_restarts)

    regime, lam, sigma0 = 1, lam0, 1.0
    restart = 0
    stop = None
    while stop is None:
        params = CmaParams.default(
            d, lam, max(1, int(math.floor(lam * mu_ratio))), elitist=elitist, active=active,
            step_adaptation=step_adaptation,
        )
        es = CmaEs(np.zeros(d), sigma0, params, _restart_rng(seed, restart, 0))
        start_evals = ev.evals
        restart_best = math.inf
        reason = None
        while reason is None:
            try:
                X = es.ask()
            except NumericalBreakdown:
                reason = "NumericalBreakdown"
                break
            values = ev.evaluate(X)
            if len(values):
                restart_best = min(restart_best, float(values.min()))
            stop = ev.stop_reason()
            if stop is not None or len(values) < len(X):
                stop = stop or BUDGET_EXHAUSTED
                break
            es.tell(X, values)
            if observer is not None:
                observer(es, regime)
            reason = check_restart(es, values[: params.lam], criteria)
        used = ev.evals - start_evals
        bipop.charge(regime, used)
        bipop.restart_log.append(
            {
                "restart_index": restart,
                "regime": regime,
                "lambda": lam,
                "sigma0": sigma0,
                "evals": used,
                "best": restart_best if math.isfinite(restart_best) else None,
                "stop_reason": stop or reason,
            }
        )
        if stop is not None:
            break
        if restart_strategy == "none":
            stop = RESTART_CRITERION
            break
        restart += 1
        if restart_strategy == "ipop":
            bipop.n_large_restarts = min(bipop.n_large_restarts + 1, max_large_restarts)
            regime, lam, sigma0 = 1, lam0 * 2 ** bipop.n_large_restarts, 1.0
        else:
            regime, lam, sigma0 = bipop_next_config(bipop, lam0, _restart_rng(seed, restart, 1))
    return ev.record("cmaes", seed, stop, bipop.restart_log)


def write_restart_log(records: list, fh) -> None:
    for entry in records:
        fh.write(json.dumps(entry) + "\n")
