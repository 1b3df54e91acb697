"""Time-weighted error criteria and their target-normalized scalarization.

The default criterion integrates ``(tau + 1) * |e(tau)|`` from a shift ``t0``
to the horizon, ignoring the erratic start of the transient; channels are
combined as ``sum_i p_i / |target_i| * F_i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .plant import GainVector, PlantSpec, SimulationTrace, simulate_step_response

CRITERIA = ("SHIFTED_ITAE", "ITAE", "IAE", "ISE", "ITSE")

# initial value of the "largest finite objective seen" used by the divergence penalty
PENALTY_FLOOR = 1e6
PENALTY_FACTOR = 10.0


@dataclass
class ObjectiveSpec:
    targets: np.ndarray
    horizon: float
    shift: Optional[float] = None
    priorities: Optional[np.ndarray] = None
    criterion: str = "SHIFTED_ITAE"

    def __post_init__(self):
        self.targets = np.array(self.targets, dtype=float).ravel()
        if self.targets.size == 0 or np.any(self.targets == 0) or not np.all(np.isfinite(self.targets)):
            raise ConfigError("targets: every target must be finite and nonzero")
        if self.priorities is None:
            self.priorities = np.ones_like(self.targets)
        self.priorities = np.array(self.priorities, dtype=float).ravel()
        if self.priorities.shape != self.targets.shape:
            raise ConfigError("priorities: length must match targets")
        if np.any(~(self.priorities > 0)):
            raise ConfigError("priorities: must be strictly positive")
        self.horizon = float(self.horizon)
        if self.shift is None:
            self.shift = 0.2 * self.horizon
        self.shift = float(self.shift)
        if not (0.0 <= self.shift < self.horizon):
            raise ConfigError(f"shift: need 0 <= t0 < horizon, got t0={self.shift}, t={self.horizon}")
        crit = str(self.criterion).upper()
        if crit not in CRITERIA:
            raise ConfigError(f"criterion: unknown {self.criterion!r}, expected one of {CRITERIA}")
        self.criterion = crit

    @property
    def n(self) -> int:
        return self.targets.size

    @classmethod
    def for_plant(cls, plant: PlantSpec, **overrides) -> "ObjectiveSpec":
        overrides.setdefault("horizon", plant.horizon)
        return cls(targets=plant.targets, **overrides)


@dataclass
class ObjectiveValue:
    value: float
    divergent: bool
    per_channel: np.ndarray = field(default_factory=lambda: np.zeros(0))


class DivergencePenalty:
    """Finite stand-in value for divergent candidates.

    Returns ten times the largest finite objective observed so far (floored at 1e6),
    so divergent points rank last without introducing inf/NaN.
    """

    def __init__(self, floor: float = PENALTY_FLOOR, factor: float = PENALTY_FACTOR):
        self.largest = float(floor)
        self.factor = float(factor)

    def observe(self, value: float) -> None:
        if math.isfinite(value) and value > self.largest:
            self.largest = value

    def value(self) -> float:
        return self.factor * self.largest

    def apply(self, value: float) -> float:
        """Pass finite values through (recording them); map anything else to the penalty."""
        if math.isfinite(value):
            self.observe(value)
            return float(value)
        return self.value()


def error_trace(trace: SimulationTrace, channel: int) -> np.ndarray:
    if not 0 <= channel < trace.n:
        raise ConfigError(f"channel {channel} out of range for {trace.n} channels")
    return np.abs(trace.samples[:, channel] - trace.targets[channel])


def _weights(criterion: str, tau: np.ndarray) -> np.ndarray:
    if criterion == "SHIFTED_ITAE":
        return tau + 1.0
    if criterion in ("ITAE", "ITSE"):
        return tau
    return np.ones_like(tau)


def _error_term(criterion: str, e: np.ndarray) -> np.ndarray:
    if criterion in ("ISE", "ITSE"):
        return e * e
    return np.abs(e)


def criterion_integral(e, dt: float, spec: ObjectiveSpec) -> float:
    """Trapezoidal integral of ``T(tau) * E(e(tau))`` for a uniformly sampled error.

    Only the shifted criterion starts at ``t0``; the classic ones integrate from 0.
    End points that fall between samples are clipped by linear interpolation.
    """
    e = np.asarray(e, dtype=float)
    crit = spec.criterion
    start = spec.shift if crit == "SHIFTED_ITAE" else 0.0
    stop = spec.horizon
    last = (e.size - 1) * dt
    if e.size < 2 or last < stop - 1e-9 * max(1.0, stop):
        raise ConfigError(
            f"sample grid covers [0, {last:g}] but the criterion needs [{start:g}, {stop:g}]"
        )
    # grid points strictly inside (start, stop) plus interpolated end points
    i0 = int(math.floor(start / dt + 1e-9))
    i1 = int(math.ceil(stop / dt - 1e-9))
    inner = np.arange(i0 + 1, i1)
    tau = np.concatenate(([start], inner * dt, [stop]))
    vals = np.concatenate(
        (
            [np.interp(start, [i0 * dt, (i0 + 1) * dt], e[i0 : i0 + 2]) if i0 + 1 < e.size else e[i0]],
            e[inner],
            [np.interp(stop, [(i1 - 1) * dt, i1 * dt], e[i1 - 1 : i1 + 1]) if i1 < e.size else e[-1]],
        )
    )
    f = _weights(crit, tau) * _error_term(crit, vals)
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(tau)))


def scalarize(
    trace: SimulationTrace, spec: ObjectiveSpec, penalty: Optional[DivergencePenalty] = None
) -> ObjectiveValue:
    """Combine per-channel criterion integrals into ``sum_i p_i / |target_i| * F_i``."""
    if trace.n != spec.n:
        raise ConfigError(f"trace has {trace.n} channels, objective expects {spec.n}")
    penalty = DivergencePenalty() if penalty is None else penalty
    if trace.divergent:
        return ObjectiveValue(penalty.value(), True, np.full(spec.n, np.nan))
    per = np.array([criterion_integral(error_trace(trace, i), trace.dt, spec) for i in range(spec.n)])
    with np.errstate(over="ignore", invalid="ignore"):
        value = float(np.sum(spec.priorities / np.abs(spec.targets) * per))
    if not math.isfinite(value):
        # finite samples whose integral overflows are treated as divergent too
        return ObjectiveValue(penalty.value(), True, per)
    penalty.observe(value)
    return ObjectiveValue(value, False, per)


class PlantObjective:
    """Objective ``M(gains)`` over physical gains of a plant.

    Calling it returns a float; divergent simulations return ``inf`` and the
    optimizer driver maps that to its per-run divergence penalty.
    """

    def __init__(
        self,
        plant: PlantSpec,
        spec: Optional[ObjectiveSpec] = None,
        mode: str = "PI",
        dt: Optional[float] = None,
    ):
        self.plant = plant
        self.spec = ObjectiveSpec.for_plant(plant) if spec is None else spec
        self.mode = mode
        self.dt = plant.dt if dt is None else dt
        self.dim = plant.k * (2 if mode == "PI" else 3)

    def simulate(self, gains) -> SimulationTrace:
        gv = gains if isinstance(gains, GainVector) else GainVector(gains, self.mode)
        return simulate_step_response(self.plant, gv, dt=self.dt, horizon=self.spec.horizon)

    def evaluate(self, gains, penalty: Optional[DivergencePenalty] = None) -> ObjectiveValue:
        return scalarize(self.simulate(gains), self.spec, penalty)

    def __call__(self, gains) -> float:
        res = scalarize(self.simulate(gains), self.spec, DivergencePenalty())
        return math.inf if res.divergent else res.value
