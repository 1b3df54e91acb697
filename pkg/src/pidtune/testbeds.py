"""Built-in synthetic plants standing in for the proprietary engine model.

Each multi-channel testbed is a chain per channel: actuator lag, a first
process lag driven by a static gain matrix ``G`` over all actuator states
(the coupling), and a second process lag feeding the measured output. Baseline
gains and target values are fixtures written by
``scripts/grid_search_baselines.py`` into ``data/testbeds.json``.
"""
from __future__ import annotations

import json
from importlib import resources
from typing import Optional

import numpy as np

from .errors import ConfigError
from .plant import PlantSpec

FIXTURE_FILE = "testbeds.json"


def coupled_lag_plant(G, tau_a, tau_p1, tau_p2, targets, name: str = "custom", **kw) -> PlantSpec:
    """Three lags per channel; actuator ``j`` feeds process ``i`` with gain ``G[i, j]``.

    State layout: actuators ``0..k-1``, first process lags ``k..2k-1``,
    outputs ``2k..3k-1``. Steady-state output equals ``G @ u``.
    """
    G = np.asarray(G, dtype=float)
    tau_a, tau_p1, tau_p2 = (np.asarray(t, dtype=float) for t in (tau_a, tau_p1, tau_p2))
    k = G.shape[0]
    s = 3 * k
    A = np.zeros((s, s))
    B = np.zeros((s, k))
    C = np.zeros((k, s))
    for i in range(k):
        a, p1, p2 = i, k + i, 2 * k + i
        A[a, a] = -1.0 / tau_a[i]
        B[a, i] = 1.0 / tau_a[i]
        A[p1, p1] = -1.0 / tau_p1[i]
        A[p1, :k] = G[i] / tau_p1[i]
        A[p2, p2] = -1.0 / tau_p2[i]
        A[p2, p1] = 1.0 / tau_p2[i]
        C[i, p2] = 1.0
    return PlantSpec(k=k, n=k, state_dim=s, A=A, B=B, Cout=C, targets=targets, name=name, **kw)


def first_order_plant(gain: float, tau: float, target: float, name: str = "custom", **kw) -> PlantSpec:
    """Single loop ``tau x' = -x + gain u`` with ``y = x``."""
    return PlantSpec(
        k=1, n=1, state_dim=1, A=[[-1.0 / tau]], B=[[gain / tau]], Cout=[[1.0]],
        targets=[target], name=name, **kw,
    )


T3_G = [[0.02, 0.006, -0.012], [0.4, 0.9, 0.6], [12.0, 40.0, -50.0]]
T3_LAGS = dict(tau_a=[0.2, 0.15, 0.3], tau_p1=[0.5, 0.4, 0.9], tau_p2=[0.2, 0.25, 0.3])
T3_TARGETS = [0.85, 12.0, 750.0]


def structural_testbeds() -> list[PlantSpec]:
    """Testbed dynamics without fixture data."""
    t1 = first_order_plant(2.0, 0.5, 1.0, name="T1", horizon=3.0)
    t2 = coupled_lag_plant(
        [[1.0, 0.5], [-0.6, 2.0]], tau_a=[0.1, 0.2], tau_p1=[0.6, 0.3], tau_p2=[0.2, 0.4],
        targets=[1.0, 3.0], name="T2", horizon=4.0,
    )
    t3 = coupled_lag_plant(T3_G, targets=T3_TARGETS, name="T3", horizon=6.0, **T3_LAGS)
    # actuator limits at twice the steady-state effort, outputs bent by 5% at target
    u_ss = np.linalg.solve(np.asarray(T3_G), np.asarray(T3_TARGETS))
    t3hard = coupled_lag_plant(
        T3_G, targets=T3_TARGETS, name="T3hard", horizon=6.0,
        saturation_lo=-2.0 * np.abs(u_ss), saturation_hi=2.0 * np.abs(u_ss),
        output_quadratic=0.05 / np.asarray(T3_TARGETS), **T3_LAGS,
    )
    return [t1, t2, t3, t3hard]


def load_fixtures() -> dict:
    text = resources.files("pidtune").joinpath("data", FIXTURE_FILE).read_text()
    return json.loads(text)


def builtin_testbeds(fixtures: Optional[dict] = None) -> list[PlantSpec]:
    """T1, T2, T3 and T3hard with their shipped baseline gains and target values."""
    fixtures = load_fixtures() if fixtures is None else fixtures
    out = []
    for spec in structural_testbeds():
        fx = fixtures.get(spec.name)
        if fx is not None:
            spec.baseline_gains = fx["baseline_gains"]
            spec.baseline_mode = fx.get("baseline_mode", "PI")
            spec.target_value = fx.get("target_value")
            spec.__post_init__()
        out.append(spec)
    return out


def get_testbed(name: str) -> PlantSpec:
    for spec in builtin_testbeds():
        if spec.name == name:
            return spec
    raise ConfigError(f"unknown testbed {name!r}; choose from {[s.name for s in builtin_testbeds()]}")
