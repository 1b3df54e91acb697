"""Reference-point sweep on a built-in testbed.

Degrades the baseline reference by 10^p elementwise for each power in the
sweep, runs seeded tuning runs per cell and prints the min/max/avg table of
evaluations-to-target.

    python scripts/run_sweep.py --plant T3 --powers -3 -2 -1 0 1 2 --runs 10 --out results/sweep
"""
from __future__ import annotations

import argparse

from pidtune.harness import ExperimentConfig, render_table, run_experiment


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--plant", default="T3")
    ap.add_argument("--algo", default="cmaes", choices=("cmaes", "pso", "shade"))
    ap.add_argument("--powers", type=int, nargs="+", default=[-3, -2, -1, 0, 1, 2])
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--budget", type=int, default=12000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/sweep")
    args = ap.parse_args(argv)
    cfg = ExperimentConfig(
        plant=args.plant, algo=args.algo, reference_scale_sweep=args.powers, n_runs=args.runs,
        budget=args.budget, base_seed=args.seed, workers=args.workers, output_dir=args.out,
    )
    print(f"{args.plant} {args.algo} target={cfg.target:.6g} budget={cfg.budget}")
    print(render_table(run_experiment(cfg)))


if __name__ == "__main__":
    main()
