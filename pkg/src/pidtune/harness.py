"""Experiment orchestration: config loading, seeded run grids, statistics and output files.

An experiment runs ``n_runs`` seeds for every cell of a reference-scale sweep;
cell ``"10^p"`` uses the reference ``reference_gains * 10**p`` elementwise.
Outputs are written by a single aggregator after all runs finish, so file
contents do not depend on the worker count.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .baselines.pso import PsoParams, run_pso
from .baselines.shade import ShadeParams, run_shade
from .cmaes import default_population_size
from .errors import ConfigError
from .evaluation import TARGET_HIT, RunRecord
from .objective import ObjectiveSpec, PlantObjective
from .plant import GainVector, PlantSpec
from .restarts import RESTART_STRATEGIES, RestartCriteria, run
from .scaling import ScalingSpec
from .testbeds import get_testbed

ALGOS = ("cmaes", "pso", "shade")
MODES = ("PI", "PID")
OBJECTIVE_KEYS = ("shift", "criterion", "priorities")
SUMMARY_COLUMNS = ("cell", "min", "max", "avg", "lower_bound_flag", "unfinished")
WORKERS_ENV = "PIDTUNE_WORKERS"
FAULT = "FAULT"


@dataclass
class ExperimentConfig:
    plant: Union[str, dict] = "T3"
    reference_gains: Optional[list] = None  # defaults to the plant's baseline gains
    budget: int = 12000
    target: Optional[float] = None  # defaults to the plant's fixture target value
    mode: str = "PI"
    algo: str = "cmaes"
    objective: dict = field(default_factory=dict)
    reference_scale_sweep: list = field(default_factory=lambda: [0])
    n_runs: int = 10
    base_seed: int = 0
    output_dir: str = "results"
    workers: int = 1
    write_traces: bool = True
    # CMA-ES options; None means the documented default
    tol_fun_hist: Optional[float] = None  # n / 2
    tol_fun: Optional[float] = None  # tol_fun_hist / 10
    popsize: Optional[int] = None  # lambda_def
    elitist: bool = True
    active: bool = True
    step_adaptation: str = "CSA"
    restart_strategy: str = "bipop"
    # baseline overrides, e.g. {"swarm_size": 40}; empty means the documented defaults
    pso: dict = field(default_factory=dict)
    shade: dict = field(default_factory=dict)

    def __post_init__(self):
        def bad(name, rule):
            raise ConfigError(f"{name}: {rule}")

        if self.algo not in ALGOS:
            bad("algo", f"must be one of {ALGOS}")
        if self.mode not in MODES:
            bad("mode", f"must be one of {MODES}")
        if not isinstance(self.n_runs, int) or self.n_runs < 1:
            bad("n_runs", "must be an integer >= 1")
        if not isinstance(self.budget, int) or self.budget < 1:
            bad("budget", "must be an integer >= 1")
        if not isinstance(self.workers, int) or self.workers < 1:
            bad("workers", "must be an integer >= 1")
        if not self.reference_scale_sweep or not all(
            isinstance(p, int) and not isinstance(p, bool) for p in self.reference_scale_sweep
        ):
            bad("reference_scale_sweep", "must be a non-empty list of integers")
        unknown = sorted(set(self.objective) - set(OBJECTIVE_KEYS))
        if unknown:
            bad("objective", f"unknown keys {unknown}")
        if self.restart_strategy not in RESTART_STRATEGIES:
            bad("restart_strategy", f"must be one of {RESTART_STRATEGIES}")
        if self.step_adaptation not in ("CSA", "TPA"):
            bad("step_adaptation", "must be CSA or TPA")
        self.pso_params()
        self.shade_params()
        if self.target is not None and not math.isfinite(self.target):
            bad("target", "must be finite")

        spec = self.plant_spec()
        if self.reference_gains is None:
            if spec.baseline is None:
                bad("reference_gains", "required when the plant has no baseline gains")
            self.reference_gains = spec.baseline.with_mode(self.mode).values.tolist()
        per = 2 if self.mode == "PI" else 3
        if len(self.reference_gains) != per * spec.k:
            bad("reference_gains", f"{self.mode} mode needs {per * spec.k} entries ({per} per controller), got {len(self.reference_gains)}")
        GainVector(self.reference_gains, self.mode)
        ScalingSpec(self.reference_gains)
        self.objective_spec()
        if self.target is None:
            self.target = spec.target_value
        if self.tol_fun_hist is None:
            self.tol_fun_hist = spec.n / 2.0
        if self.popsize is None:
            self.popsize = default_population_size(len(self.reference_gains))

    def pso_params(self) -> PsoParams:
        return _params("pso", PsoParams, self.pso)

    def shade_params(self) -> ShadeParams:
        return _params("shade", ShadeParams, self.shade)

    def plant_spec(self) -> PlantSpec:
        if isinstance(self.plant, str):
            return get_testbed(self.plant)
        if isinstance(self.plant, dict):
            return PlantSpec.from_dict(self.plant)
        raise ConfigError("plant: must be a testbed name or an inline plant object")

    def objective_spec(self) -> ObjectiveSpec:
        return ObjectiveSpec.for_plant(self.plant_spec(), **self.objective)

    def plant_objective(self) -> PlantObjective:
        return PlantObjective(self.plant_spec(), self.objective_spec(), mode=self.mode)

    def scaling(self, power: int) -> ScalingSpec:
        return ScalingSpec(np.asarray(self.reference_gains, dtype=float) * 10.0 ** power)

    def criteria(self) -> RestartCriteria:
        return RestartCriteria(tol_fun_hist=self.tol_fun_hist, tol_fun=self.tol_fun)

    def to_dict(self) -> dict:
        return asdict(self)


def _params(name, cls, overrides):
    if not isinstance(overrides, dict):
        raise ConfigError(f"{name}: must be an object")
    unknown = sorted(set(overrides) - {f.name for f in fields(cls)})
    if unknown:
        raise ConfigError(f"{name}: unknown keys {unknown}")
    return cls(**overrides)


def config_from_dict(data: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return ExperimentConfig(**data)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_dict(data)


def cell_label(power: int) -> str:
    return f"10^{power}"


def run_single(config: ExperimentConfig, power: int, seed: int) -> RunRecord:
    """One seeded run of the configured algorithm on one sweep cell."""
    obj = config.plant_objective()
    scaling = config.scaling(power)
    if config.algo == "pso":
        return run_pso(obj, scaling, config.budget, config.target, seed, config.pso_params())
    if config.algo == "shade":
        return run_shade(obj, scaling, config.budget, config.target, seed, config.shade_params())
    return run(
        obj, scaling, config.criteria(), config.budget, config.target, seed,
        popsize=config.popsize, elitist=config.elitist, active=config.active,
        step_adaptation=config.step_adaptation, restart_strategy=config.restart_strategy,
    )


def _job(args) -> dict:
    config, power, seed = args
    try:
        rec = run_single(config, power, seed).to_dict()
    except Exception as exc:  # recorded, not fatal
        rec = RunRecord(config.algo, seed, [], math.inf, 0, FAULT).to_dict()
        rec["error"] = f"{type(exc).__name__}: {exc}"
    rec["cell"] = cell_label(power)
    rec["reference"] = config.scaling(power).reference.tolist()
    return rec


def worker_count(config: ExperimentConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env is None or env == "":
        return config.workers
    try:
        n = int(env)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {env!r}") from exc
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {env!r}")
    return n


@dataclass
class StatsRow:
    """Run-length statistics for one sweep cell.

    ``min`` and ``max`` cover finished runs only; ``avg`` counts unfinished
    runs at the budget and is then a lower bound.
    """

    cell: str
    min: Optional[int]
    max: Optional[int]
    avg: float
    unfinished: int
    records: list = field(default_factory=list, repr=False)

    @property
    def lower_bound(self) -> bool:
        return self.unfinished > 0

    @classmethod
    def from_counts(cls, cell: str, counts, finished, budget: int, records=None) -> "StatsRow":
        counts = [int(c) for c in counts]
        finished = [bool(f) for f in finished]
        done = [c for c, f in zip(counts, finished) if f]
        charged = [c if f else max(c, budget) for c, f in zip(counts, finished)]
        return cls(
            cell=cell,
            min=min(done) if done else None,
            max=max(done) if done else None,
            avg=float(np.mean(charged)) if charged else math.nan,
            unfinished=len(counts) - len(done),
            records=list(records or []),
        )

    @classmethod
    def from_records(cls, cell: str, records: list, budget: int) -> "StatsRow":
        return cls.from_counts(
            cell,
            [r["evaluations_used"] for r in records],
            [r["stop_reason"] == TARGET_HIT for r in records],
            budget,
            records,
        )

    def render(self) -> str:
        """Table line ``min max avg``; the average carries a ``≥`` when it is a lower bound."""

        def num(v):
            return "-" if v is None else str(v)

        avg = "-" if math.isnan(self.avg) else str(int(math.floor(self.avg + 0.5)))
        if self.lower_bound:
            avg = "≥" + avg
        return f"{num(self.min)} {num(self.max)} {avg}"

    def csv_fields(self) -> list:
        return [
            self.cell,
            "" if self.min is None else self.min,
            "" if self.max is None else self.max,
            repr(self.avg),
            int(self.lower_bound),
            self.unfinished,
        ]


def render_table(rows: list) -> str:
    width = max([len(r.cell) for r in rows] + [4])
    lines = [f"{'cell':<{width}} min max avg"]
    lines += [f"{r.cell:<{width}} {r.render()}" for r in rows]
    return "\n".join(lines)


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def trace_filename(record: dict) -> str:
    return f"trace_{record['cell'].replace('^', 'p')}_seed{record['seed']}.csv"


def emit_outputs(rows: list, records: list, outdir, config: Optional[ExperimentConfig] = None) -> list:
    """Write summary.csv, runs.jsonl and (with a config) one trace CSV per best point."""
    outdir = Path(outdir)
    written = []
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        summary = outdir / "summary.csv"
        with summary.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            for row in rows:
                w.writerow(row.csv_fields())
        written.append(summary)
        runs = outdir / "runs.jsonl"
        with runs.open("w") as fh:
            for rec in records:
                fh.write(json.dumps(_json_safe(rec), sort_keys=True, ensure_ascii=False) + "\n")
        written.append(runs)
        if config is not None and config.write_traces:
            obj = config.plant_objective()
            for rec in records:
                if not rec.get("best_point"):
                    continue
                path = outdir / trace_filename(rec)
                path.write_text(obj.simulate(rec["best_point"]).to_csv())
                written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write outputs under {outdir}: {exc}") from exc
    return written


def run_experiment(config: ExperimentConfig, outdir=None, emit: bool = True) -> list:
    """Run every (cell, seed) pair and aggregate one :class:`StatsRow` per cell."""
    jobs = [
        (config, power, config.base_seed + i)
        for power in config.reference_scale_sweep
        for i in range(config.n_runs)
    ]
    n_workers = worker_count(config)
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            records = list(pool.map(_job, jobs))
    else:
        records = [_job(j) for j in jobs]
    rows = []
    for power in config.reference_scale_sweep:
        cell = cell_label(power)
        rows.append(StatsRow.from_records(cell, [r for r in records if r["cell"] == cell], config.budget))
    if emit:
        emit_outputs(rows, records, outdir or config.output_dir, config)
    return rows


__all__ = [
    "ExperimentConfig", "StatsRow", "config_from_dict", "load_config", "run_experiment",
    "run_single", "emit_outputs", "render_table", "cell_label",
]
