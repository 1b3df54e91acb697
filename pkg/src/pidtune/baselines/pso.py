"""Global-best particle swarm in the reference-scaled space.

Constants emulate the classic DEAP example swarm: no inertia weight,
acceleration coefficients 2.0, per-component speed clamp.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import ConfigError
from ..evaluation import Evaluator, RunRecord
from ..scaling import ScalingSpec


@dataclass
class PsoParams:
    swarm_size: int = 30
    phi1: float = 2.0
    phi2: float = 2.0
    # 20% of the nominal [-1, 1] range
    speed_max: float = 0.4

    def __post_init__(self):
        if self.swarm_size < 1:
            raise ConfigError("swarm_size: must be >= 1")
        if not (self.phi1 >= 0 and self.phi2 >= 0 and self.speed_max > 0):
            raise ConfigError("phi1, phi2 must be >= 0 and speed_max > 0")


@dataclass
class PsoState:
    positions: np.ndarray
    velocities: np.ndarray
    best_positions: np.ndarray
    best_values: np.ndarray
    global_best: np.ndarray
    global_best_value: float
    params: PsoParams

    def refresh_global(self) -> None:
        i = int(np.argmin(self.best_values))
        if self.best_values[i] < self.global_best_value:
            self.global_best_value = float(self.best_values[i])
            self.global_best = self.best_positions[i].copy()


def pso_init(d: int, params: PsoParams, evaluate: Callable, rng: np.random.Generator) -> PsoState:
    X = rng.uniform(-1.0, 1.0, size=(params.swarm_size, d))
    V = rng.uniform(-params.speed_max, params.speed_max, size=(params.swarm_size, d))
    f = evaluate(X)
    n = len(f)
    vals = np.full(params.swarm_size, np.inf)
    vals[:n] = f
    state = PsoState(X, V, X.copy(), vals, X[0].copy(), np.inf, params)
    state.refresh_global()
    return state


def pso_step(state: PsoState, evaluate: Callable, rng: np.random.Generator) -> PsoState:
    """Move every particle toward its own best and the swarm best, then evaluate."""
    p = state.params
    X, V = state.positions, state.velocities
    u1 = rng.uniform(0.0, p.phi1, size=X.shape)
    u2 = rng.uniform(0.0, p.phi2, size=X.shape)
    V = V + u1 * (state.best_positions - X) + u2 * (state.global_best - X)
    V = np.clip(V, -p.speed_max, p.speed_max)
    X = X + V
    f = evaluate(X)
    n = len(f)
    better = np.zeros(len(X), dtype=bool)
    better[:n] = f < state.best_values[:n]
    best_pos = state.best_positions.copy()
    best_val = state.best_values.copy()
    best_pos[better] = X[better]
    best_val[:n] = np.where(better[:n], f, best_val[:n])
    new = PsoState(X, V, best_pos, best_val, state.global_best, state.global_best_value, p)
    new.refresh_global()
    return new


def run_pso(
    objective: Callable,
    scaling: ScalingSpec,
    budget: int = 10000,
    target: Optional[float] = None,
    seed: int = 0,
    params: Optional[PsoParams] = None,
    map_fn: Callable = map,
) -> RunRecord:
    params = params or PsoParams()
    if budget < 1:
        raise ConfigError("budget must be >= 1")
    rng = np.random.default_rng([int(seed), 0, 2])
    ev = Evaluator(objective, budget, target, scaling, map_fn=map_fn)
    state = pso_init(scaling.dim, params, ev.evaluate, rng)
    generations = 0
    while ev.stop_reason() is None:
        state = pso_step(state, ev.evaluate, rng)
        generations += 1
    log = [{"restart_index": 0, "regime": None, "lambda": params.swarm_size, "sigma0": None,
            "evals": ev.evals, "best": ev.best_value, "stop_reason": ev.stop_reason()}]
    return ev.record("pso", seed, ev.stop_reason(), log)
