"""Command-line entry point: ``pidtune {tune,bench,simulate,testbeds}``.

Exit codes: 0 success, 1 configuration error, 2 runtime fault.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError
from .harness import (
    StatsRow, cell_label, config_from_dict, emit_outputs, render_table, run_experiment, _job,
)
from .plant import GainVector
from .testbeds import builtin_testbeds

EXIT_OK, EXIT_CONFIG, EXIT_FAULT = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are configuration errors
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pidtune", description="Tune coupled PID gains with BIPOP-aCMA-ES and baselines.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--plant", help="built-in testbed name (overrides the config)")
        sp.add_argument("--out", help="output directory")

    def run_flags(sp):
        sp.add_argument("--algo", choices=("cmaes", "pso", "shade"))
        sp.add_argument("--seed", type=int, help="seed (tune) or base seed (bench)")
        sp.add_argument("--budget", type=int)
        sp.add_argument("--target", type=float)

    tune = sub.add_parser("tune", help="one seeded run")
    common(tune)
    run_flags(tune)
    bench = sub.add_parser("bench", help="full experiment over the scale sweep")
    common(bench)
    run_flags(bench)
    sim = sub.add_parser("simulate", help="trace a given gain vector")
    common(sim)
    sim.add_argument("--gains", required=True, help="comma-separated gains, e.g. '2,0.5,1,0.1'")
    sub.add_parser("testbeds", help="list built-in testbeds")
    return p


def _config(args):
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    overrides = {
        "plant": args.plant,
        "output_dir": args.out,
        "algo": getattr(args, "algo", None),
        "budget": getattr(args, "budget", None),
        "target": getattr(args, "target", None),
    }
    if getattr(args, "seed", None) is not None:
        overrides["base_seed"] = args.seed
    data.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(data)


def _parse_gains(text: str) -> list:
    try:
        return [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise ConfigError(f"--gains: {exc}") from exc


def cmd_testbeds(args, out) -> int:
    for spec in builtin_testbeds():
        out.write(f"{spec.name}\tk={spec.k}\thorizon={spec.horizon}\n")
    return EXIT_OK


def cmd_tune(args, out) -> int:
    cfg = _config(args)
    power = cfg.reference_scale_sweep[0]
    rec = _job((cfg, power, cfg.base_seed))
    row = StatsRow.from_records(cell_label(power), [rec], cfg.budget)
    emit_outputs([row], [rec], cfg.output_dir, cfg)
    if rec["stop_reason"] == "FAULT":
        out.write(f"run fault: {rec.get('error')}\n")
        return EXIT_FAULT
    out.write(
        f"{rec['algo']} seed={rec['seed']} stop={rec['stop_reason']} evals={rec['evaluations_used']} "
        f"best={rec['best_value']!r}\nbest_gains={','.join(repr(v) for v in rec['best_point'])}\n"
    )
    return EXIT_OK


def cmd_bench(args, out) -> int:
    cfg = _config(args)
    rows = run_experiment(cfg)
    out.write(render_table(rows) + "\n")
    faults = sum(r["stop_reason"] == "FAULT" for row in rows for r in row.records)
    return EXIT_FAULT if faults else EXIT_OK


def cmd_simulate(args, out) -> int:
    cfg = _config(args)
    gains = GainVector(_parse_gains(args.gains), cfg.mode)
    obj = cfg.plant_objective()
    if gains.k != obj.plant.k:
        raise ConfigError(f"--gains: {gains.k} controllers given, plant has {obj.plant.k}")
    trace = obj.simulate(gains)
    res = obj.evaluate(gains)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "trace.csv"
    trace.to_csv(path)
    flag = " (divergent)" if res.divergent else ""
    out.write(f"objective={res.value!r}{flag}\ntrace={path}\n")
    return EXIT_OK


COMMANDS = {"tune": cmd_tune, "bench": cmd_bench, "simulate": cmd_simulate, "testbeds": cmd_testbeds}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, out)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except Exception as exc:  # anything else is a runtime fault
        sys.stderr.write(f"runtime fault: {type(exc).__name__}: {exc}\n")
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
