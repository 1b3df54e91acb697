"""Budget-accounted objective evaluation shared by every optimizer driver.

One :class:`Evaluator` per run: it decodes normalized points, counts calls,
maps faults and non-finite values to the divergence penalty, and tracks the
global best and the target/budget stop conditions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .objective import DivergencePenalty
from .scaling import ScalingSpec, decode

TARGET_HIT = "TARGET_HIT"
BUDGET_EXHAUSTED = "BUDGET_EXHAUSTED"
RESTART_CRITERION = "RESTART_CRITERION"  # only when restarts are disabled


@dataclass
class RunRecord:
    algo: str
    seed: int
    best_point: list
    best_value: float
    evaluations_used: int
    stop_reason: str
    restart_log: list = field(default_factory=list)
    best_normalized: Optional[list] = None
    faults: int = 0

    @property
    def finished(self) -> bool:
        return self.stop_reason == TARGET_HIT

    def to_dict(self) -> dict:
        return {
            "algo": self.algo,
            "seed": self.seed,
            "best_point": [float(v) for v in self.best_point],
            "best_value": float(self.best_value),
            "evaluations_used": int(self.evaluations_used),
            "stop_reason": self.stop_reason,
            "restart_log": self.restart_log,
            "best_normalized": None if self.best_normalized is None else [float(v) for v in self.best_normalized],
            "faults": self.faults,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(**d)


class Evaluator:
    def __init__(
        self,
        objective: Callable,
        budget: int,
        target: Optional[float] = None,
        scaling: Optional[ScalingSpec] = None,
        log_points: bool = False,
        map_fn: Callable = map,
    ):
        self.objective = objective
        self.budget = int(budget)
        self.target = target
        self.scaling = scaling
        self.penalty = DivergencePenalty()
        self.map_fn = map_fn
        self.evals = 0
        self.faults = 0
        self.best_value = math.inf
        self.best_point: Optional[np.ndarray] = None
        self.best_normalized: Optional[np.ndarray] = None
        self.best_trace: list[tuple[int, float]] = []
        self.log: Optional[list] = [] if log_points else None
        self._since_improvement = 0

    @property
    def remaining(self) -> int:
        return max(0, self.budget - self.evals)

    @property
    def exhausted(self) -> bool:
        return self.evals >= self.budget

    @property
    def target_hit(self) -> bool:
        return self.target is not None and self.best_value <= self.target

    @property
    def done(self) -> bool:
        return self.target_hit or self.exhausted

    @property
    def evals_since_improvement(self) -> int:
        return self._since_improvement

    def physical(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return v.copy() if self.scaling is None else decode(self.scaling, v)

    def _call(self, w):
        try:
            return float(self.objective(w))
        except Exception:  # a faulting simulation costs one evaluation and gets the penalty
            return math.nan

    def evaluate(self, V) -> np.ndarray:
        """Evaluate the rows of ``V`` that fit in the remaining budget, in order."""
        V = np.atleast_2d(np.asarray(V, dtype=float))
        V = V[: self.remaining]
        W = [self.physical(v) for v in V]
        raw = list(self.map_fn(self._call, W))
        out = np.empty(len(raw))
        for i, (v, w, r) in enumerate(zip(V, W, raw)):
            if math.isnan(r):
                self.faults += 1
            value = self.penalty.apply(r)
            out[i] = value
            self.evals += 1
            if self.log is not None:
                self.log.append((v.copy(), w.copy(), value))
            if value < self.best_value:
                self.best_value = value
                self.best_point = w.copy()
                self.best_normalized = v.copy()
                self.best_trace.append((self.evals, value))
                self._since_improvement = 0
            else:
                self._since_improvement += 1
        return out

    def record(self, algo: str, seed: int, stop_reason: str, restart_log=None) -> RunRecord:
        return RunRecord(
            algo=algo,
            seed=seed,
            best_point=[] if self.best_point is None else self.best_point.tolist(),
            best_value=self.best_value,
            evaluations_used=self.evals,
            stop_reason=stop_reason,
            restart_log=restart_log or [],
            best_normalized=None if self.best_normalized is None else self.best_normalized.tolist(),
            faults=self.faults,
        )

    def stop_reason(self) -> Optional[str]:
        if self.target_hit:
            return TARGET_HIT
        if self.exhausted:
            return BUDGET_EXHAUSTED
        return None
