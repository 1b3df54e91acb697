"""Regenerate the shipped testbed fixtures (baseline PI gains and target values).

Baseline gains come from a coarse log-grid search around a textbook PI guess
(``P = 0.5 / |g|``, ``I = 1 / (|g| T)`` with channel DC gain ``g`` and summed
lag ``T``), followed by one finer grid pass around the coarse winner. The
target value of each testbed is 0.6 times the baseline objective.

    python scripts/grid_search_baselines.py [--out src/pidtune/data/testbeds.json]
"""
from __future__ import annotations

import argparse
import itertools
import json
from pathlib import Path

import numpy as np

from pidtune.objective import PlantObjective
from pidtune.plant import simulate_step_response, GainVector
from pidtune.testbeds import T3_LAGS, structural_testbeds

TARGET_FRACTION = 0.6
COARSE = np.logspace(-1.0, 1.0, 5)
FINE = np.logspace(-0.5, 0.5, 5)
LAG_SUMS = {
    "T1": [0.5],
    "T2": [0.1 + 0.6 + 0.2, 0.2 + 0.3 + 0.4],
    "T3": list(np.sum([T3_LAGS[k] for k in ("tau_a", "tau_p1", "tau_p2")], axis=0)),
}
LAG_SUMS["T3hard"] = LAG_SUMS["T3"]


def initial_guess(spec, lag_sums) -> np.ndarray:
    dc = np.diag(spec.Cout @ np.linalg.solve(-spec.A, spec.B))
    g = np.abs(dc)
    x = np.empty(2 * spec.k)
    x[0::2] = np.sign(dc) * 0.5 / g
    x[1::2] = np.sign(dc) / (g * np.asarray(lag_sums))
    return x


def grid_pass(objective, center, factors):
    best_value, best = np.inf, center
    for combo in itertools.product(factors, repeat=center.size):
        x = center * np.asarray(combo)
        v = objective(x)
        if v < best_value:
            best_value, best = v, x
    return best_value, best


def search(spec):
    obj = PlantObjective(spec)
    _, coarse = grid_pass(obj, initial_guess(spec, LAG_SUMS[spec.name]), COARSE)
    value, best = grid_pass(obj, coarse, FINE)
    return value, best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    root = Path(__file__).resolve().parents[1]
    ap.add_argument("--out", default=str(root / "src" / "pidtune" / "data" / "testbeds.json"))
    args = ap.parse_args(argv)
    fixtures = {}
    for spec in structural_testbeds():
        value, gains = search(spec)
        trace = simulate_step_response(spec, GainVector(gains, "PI"))
        rel = np.abs(trace.samples[-1] / spec.targets - 1.0)
        fixtures[spec.name] = {
            "baseline_gains": [float(v) for v in gains],
            "baseline_mode": "PI",
            "baseline_objective": float(value),
            "target_value": float(TARGET_FRACTION * value),
        }
        print(f"{spec.name}: objective {value!r}, final relative errors {np.round(rel, 4).tolist()}")
    Path(args.out).write_text(json.dumps(fixtures, indent=2) + "\n")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
