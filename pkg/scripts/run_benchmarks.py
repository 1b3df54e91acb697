"""Sanity benchmarks for the CMA-ES driver on sphere, Rosenbrock and Rastrigin.

Prints hits and evaluation counts per problem, with restarts on and off.

    python scripts/run_benchmarks.py --seeds 10
"""
from __future__ import annotations

import argparse

import numpy as np

from pidtune.restarts import RestartCriteria, run
from pidtune.scaling import ScalingSpec


def sphere(x):
    return float(np.dot(x, x))


def rosenbrock(x):
    x = np.asarray(x)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def rastrigin(shift):
    def f(x):
        z = np.asarray(x) - shift
        return float(10.0 * z.size + np.sum(z * z - 10.0 * np.cos(2.0 * np.pi * z)))
    return f


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args(argv)
    shift = np.random.default_rng(2024).uniform(-2.0, 2.0, 10)
    start = np.full(6, 10.0 / np.sqrt(6.0))
    problems = [
        ("sphere-6", lambda x: sphere(np.asarray(x) - start), 6, 3000, 1e-10, {}),
        ("rosenbrock-6", rosenbrock, 6, 12000, 1e-8, {}),
        ("rastrigin-10 bipop", rastrigin(shift), 10, 50000, 1.0, {"elitist": False}),
        ("rastrigin-10 single", rastrigin(shift), 10, 50000, 1.0, {"elitist": False, "restart_strategy": "none"}),
    ]
    for name, f, d, budget, target, kw in problems:
        crit = RestartCriteria(tol_fun_hist=0.1 if d == 10 else 1e-12)
        recs = [run(f, ScalingSpec.unit(d), crit, budget, target, s, **kw) for s in range(args.seeds)]
        hits = sum(r.finished for r in recs)
        print(f"{name:<20} hits {hits}/{args.seeds}  evals {[r.evaluations_used for r in recs]}")


if __name__ == "__main__":
    main()
