"""CMA-ES against the PSO and SHADE baselines on degraded references.

For every algorithm and sweep cell the script runs seeded runs through the
experiment harness and prints the table plus the median evaluations-to-target
(unfinished runs count at the budget).

    python scripts/run_comparison.py --plant T3 --powers 1 2 --runs 5 --budget 10000
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from pidtune.harness import ExperimentConfig, render_table, run_experiment


def median_evals(row, budget):
    return float(np.median([
        r["evaluations_used"] if r["stop_reason"] == "TARGET_HIT" else budget for r in row.records
    ]))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--plant", default="T3")
    ap.add_argument("--powers", type=int, nargs="+", default=[1, 2])
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--budget", type=int, default=10000)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/comparison")
    args = ap.parse_args(argv)
    for algo in ("cmaes", "shade", "pso"):
        cfg = ExperimentConfig(
            plant=args.plant, algo=algo, reference_scale_sweep=args.powers, n_runs=args.runs,
            budget=args.budget, workers=args.workers, output_dir=str(Path(args.out) / algo),
        )
        rows = run_experiment(cfg)
        print(f"== {algo}")
        print(render_table(rows))
        print("median: " + "  ".join(f"{r.cell}={median_evals(r, cfg.budget):.0f}" for r in rows))


if __name__ == "__main__":
    main()
