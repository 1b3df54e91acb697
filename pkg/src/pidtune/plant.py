"""Closed-loop simulation of coupled linear plants under PID control.

The plant is ``dx/dt = A x + B sat(u)`` with outputs ``y = C x + q * (C x)**2``.
Controller ``i`` drives actuator ``i`` from the error on channel ``i``; the
coupling lives in the off-diagonal structure of ``A`` and ``B``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels
from .errors import ConfigError, SimulationFault

MODES = ("PI", "PID")


@dataclass(frozen=True)
class GainVector:
    """Flat gain vector ``(P1, I1, D1, ..., Pk, Ik, Dk)``; PI mode omits the D entries."""

    values: np.ndarray
    mode: str = "PI"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        vals = np.array(self.values, dtype=float).ravel()
        per = 2 if self.mode == "PI" else 3
        if vals.size == 0 or vals.size % per:
            raise ConfigError(
                f"{self.mode} gain vector length must be a positive multiple of {per}, got {vals.size}"
            )
        if not np.all(np.isfinite(vals)):
            raise ConfigError("gain vector contains non-finite entries")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def k(self) -> int:
        return self.values.size // (2 if self.mode == "PI" else 3)

    def matrix(self) -> np.ndarray:
        """(k, 3) array of P, I, D per controller; D is zero in PI mode."""
        if self.mode == "PID":
            return self.values.reshape(self.k, 3).copy()
        m = np.zeros((self.k, 3))
        m[:, :2] = self.values.reshape(self.k, 2)
        return m

    @classmethod
    def from_matrix(cls, m, mode: str = "PID") -> "GainVector":
        m = np.asarray(m, dtype=float)
        if mode == "PI":
            return cls(m[:, :2].ravel(), "PI")
        return cls(m[:, :3].ravel(), "PID")

    def with_mode(self, mode: str) -> "GainVector":
        return GainVector.from_matrix(self.matrix(), mode)


@dataclass(frozen=True)
class PidLoopState:
    integral_accumulator: float = 0.0
    previous_error: float = 0.0
    previous_measurement: float = 0.0
    steps: int = 0


def pid_control(state: PidLoopState, error: float, dt: float, gains, measurement: float = 0.0):
    """One discrete PID update: rectangle-rule integral, backward-difference derivative on error.

    The derivative term is zero on the first step of a run.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if not math.isfinite(error):
        raise SimulationFault(f"non-finite error input {error!r}")
    p, i, d = gains
    acc = state.integral_accumulator + error * dt
    deriv = 0.0 if state.steps == 0 else (error - state.previous_error) / dt
    control = p * error + i * acc + d * deriv
    return control, PidLoopState(acc, error, measurement, state.steps + 1)


def _as_matrix(data, shape, name):
    arr = np.array(data, dtype=float)
    if arr.shape != shape:
        raise ConfigError(f"{name}: expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name}: entries must be finite")
    return arr


def _bounds(values, k, default):
    if values is None:
        return np.full(k, default)
    if len(values) != k:
        raise ConfigError(f"saturation bounds need {k} entries, got {len(values)}")
    return np.array([default if v is None else float(v) for v in values])


@dataclass
class PlantSpec:
    """Coupled MIMO plant closed with ``k`` controllers (``n == k`` channels)."""

    k: int
    n: int
    state_dim: int
    A: np.ndarray
    B: np.ndarray
    Cout: np.ndarray
    targets: np.ndarray
    initial_state: Optional[np.ndarray] = None
    saturation_lo: Optional[np.ndarray] = None
    saturation_hi: Optional[np.ndarray] = None
    output_quadratic: Optional[np.ndarray] = None
    name: str = "custom"
    dt: float = 0.01
    horizon: float = 6.0
    baseline_gains: Optional[np.ndarray] = None
    baseline_mode: str = "PI"
    target_value: Optional[float] = None

    def __post_init__(self):
        k, n, s = int(self.k), int(self.n), int(self.state_dim)
        if k < 1 or s < 1:
            raise ConfigError("k and state_dim must be positive")
        if n != k:
            raise ConfigError(f"n must equal k (one controller per channel), got n={n}, k={k}")
        self.k, self.n, self.state_dim = k, n, s
        self.A = _as_matrix(self.A, (s, s), "A")
        self.B = _as_matrix(self.B, (s, k), "B")
        self.Cout = _as_matrix(self.Cout, (n, s), "Cout")
        self.targets = _as_matrix(self.targets, (n,), "targets")
        if np.any(self.targets == 0):
            raise ConfigError("targets: every target must be nonzero")
        self.initial_state = (
            np.zeros(s) if self.initial_state is None else _as_matrix(self.initial_state, (s,), "initial_state")
        )
        lo = self.saturation_lo
        hi = self.saturation_hi
        self.saturation_lo = _bounds(None if lo is None else list(lo), k, -np.inf)
        self.saturation_hi = _bounds(None if hi is None else list(hi), k, np.inf)
        if np.any(self.saturation_lo >= self.saturation_hi):
            raise ConfigError("saturation bounds must satisfy lo < hi per actuator")
        self.output_quadratic = (
            np.zeros(n) if self.output_quadratic is None else _as_matrix(self.output_quadratic, (n,), "output_quadratic")
        )
        if not (self.dt > 0 and self.horizon >= self.dt):
            raise ConfigError("need dt > 0 and horizon >= dt")
        if self.baseline_gains is not None:
            self.baseline_gains = GainVector(self.baseline_gains, self.baseline_mode).values
            if GainVector(self.baseline_gains, self.baseline_mode).k != k:
                raise ConfigError("baseline_gains length does not match k")

    @property
    def baseline(self) -> Optional[GainVector]:
        if self.baseline_gains is None:
            return None
        return GainVector(self.baseline_gains, self.baseline_mode)

    def coupling(self) -> list[tuple[int, int]]:
        """Pairs ``(i, j)`` where actuator ``j`` reaches channel ``i`` with ``i != j``.

        Computed from the controllability structure ``Cout (A^m) B``.
        """
        s = self.state_dim
        reach = np.zeros((self.n, self.k), dtype=bool)
        M = self.B != 0
        for _ in range(s):
            reach |= (np.abs(self.Cout) > 0).astype(int) @ M.astype(int) > 0
            M = ((np.abs(self.A) > 0).astype(int) @ M.astype(int)) > 0
        return [(i, j) for i in range(self.n) for j in range(self.k) if i != j and reach[i, j]]

    # -- serialization -------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "PlantSpec":
        d = dict(d)
        allowed = {
            "name", "k", "n", "state_dim", "dynamics", "initial_state", "targets",
            "dt", "horizon", "baseline_gains", "baseline_mode", "target_value", "coupling",
        }
        unknown = sorted(set(d) - allowed)
        if unknown:
            raise ConfigError(f"unknown plant keys: {', '.join(unknown)}")
        for key in ("k", "state_dim", "dynamics", "targets"):
            if key not in d:
                raise ConfigError(f"plant: missing required field {key!r}")
        dyn = dict(d.pop("dynamics"))
        d.pop("coupling", None)  # informational only; derived from A/B
        dyn_allowed = {"A", "B", "Cout", "saturation", "output_quadratic"}
        unknown = sorted(set(dyn) - dyn_allowed)
        if unknown:
            raise ConfigError(f"unknown dynamics keys: {', '.join(unknown)}")
        sat = dyn.get("saturation") or {}
        d.setdefault("n", d["k"])
        return cls(
            A=dyn.get("A"),
            B=dyn.get("B"),
            Cout=dyn.get("Cout"),
            saturation_lo=sat.get("lo"),
            saturation_hi=sat.get("hi"),
            output_quadratic=dyn.get("output_quadratic"),
            **d,
        )

    def to_dict(self) -> dict:
        def bound(arr):
            return [None if not np.isfinite(v) else float(v) for v in arr]

        out = {
            "name": self.name,
            "k": self.k,
            "n": self.n,
            "state_dim": self.state_dim,
            "dynamics": {
                "A": self.A.tolist(),
                "B": self.B.tolist(),
                "Cout": self.Cout.tolist(),
                "saturation": {"lo": bound(self.saturation_lo), "hi": bound(self.saturation_hi)},
                "output_quadratic": self.output_quadratic.tolist(),
            },
            "initial_state": self.initial_state.tolist(),
            "targets": self.targets.tolist(),
            "dt": self.dt,
            "horizon": self.horizon,
            "baseline_mode": self.baseline_mode,
        }
        if self.baseline_gains is not None:
            out["baseline_gains"] = self.baseline_gains.tolist()
        if self.target_value is not None:
            out["target_value"] = self.target_value
        return out

    def with_targets(self, targets) -> "PlantSpec":
        return replace(self, targets=np.array(targets, dtype=float))


def load_plant_spec(path) -> PlantSpec:
    with open(path) as fh:
        return PlantSpec.from_dict(json.load(fh))


@dataclass
class SimulationTrace:
    dt: float
    horizon: float
    samples: np.ndarray  # (n_samples, n)
    targets: np.ndarray
    divergent: bool = False
    first_nonfinite: Optional[int] = None

    @property
    def n(self) -> int:
        return self.targets.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.shape[0]) * self.dt

    def actual(self, channel: int) -> np.ndarray:
        return self.samples[:, channel]

    def write_csv(self, fh) -> None:
        """Write ``time,ch1_actual,ch1_target,...`` rows with round-trip float precision."""
        w = csv.writer(fh, lineterminator="\n")
        header = ["time"]
        for i in range(self.n):
            header += [f"ch{i + 1}_actual", f"ch{i + 1}_target"]
        w.writerow(header)
        for t, row in zip(self.times, self.samples):
            cells = [repr(float(t))]
            for i in range(self.n):
                cells += [repr(float(row[i])), repr(float(self.targets[i]))]
            w.writerow(cells)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def n_steps_for(dt: float, horizon: float) -> int:
    # guards against 6/0.01 landing a hair under 600
    return int(math.floor(horizon / dt + 1e-9))


def step_plant(spec: PlantSpec, state, controls, dt: float) -> np.ndarray:
    """Advance the plant state one RK4 step with saturated, held controls."""
    if not dt > 0:
        raise ConfigError("dt must be positive")
    x = np.asarray(state, dtype=float)
    u = np.asarray(controls, dtype=float)
    if x.shape != (spec.state_dim,) or u.shape != (spec.k,):
        raise ConfigError("state/controls dimensions do not match the plant")
    u = np.where(np.isnan(u), u, np.clip(u, spec.saturation_lo, spec.saturation_hi))
    return _kernels.rk4_step(spec.A, spec.B, x, u, float(dt))


def plant_output(spec: PlantSpec, state) -> np.ndarray:
    return _kernels.plant_output(spec.Cout, spec.output_quadratic, np.asarray(state, dtype=float))


def simulate_step_response(
    spec: PlantSpec, gains: GainVector, dt: Optional[float] = None, horizon: Optional[float] = None
) -> SimulationTrace:
    """Closed-loop response to a step of all targets at t = 0.

    A trace whose state turns non-finite is truncated before that sample and flagged.
    """
    dt = spec.dt if dt is None else float(dt)
    horizon = spec.horizon if horizon is None else float(horizon)
    if not (dt > 0 and horizon >= dt):
        raise ConfigError("need dt > 0 and horizon >= dt")
    if not isinstance(gains, GainVector):
        gains = GainVector(gains, "PID" if np.size(gains) == 3 * spec.k else "PI")
    if gains.k != spec.k:
        raise ConfigError(f"gain vector is for {gains.k} controllers, plant has {spec.k}")
    n_steps = n_steps_for(dt, horizon)
    out, valid = _kernels.closed_loop(
        spec.A, spec.B, spec.Cout, spec.output_quadratic,
        spec.saturation_lo, spec.saturation_hi, spec.initial_state,
        spec.targets, gains.matrix(), dt, n_steps,
    )
    divergent = valid < n_steps + 1
    return SimulationTrace(
        dt=dt,
        horizon=horizon,
        samples=out[:valid].copy(),
        targets=spec.targets.copy(),
        divergent=bool(divergent),
        first_nonfinite=int(valid) if divergent else None,
    )
