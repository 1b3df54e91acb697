import csv
import io
import json

import numpy as np
import pytest

from pidtune import cli
from pidtune.errors import ConfigError
from pidtune.evaluation import TARGET_HIT
from pidtune.harness import (
    ExperimentConfig, StatsRow, config_from_dict, emit_outputs, load_config, render_table,
    run_experiment, worker_count,
)
from pidtune.testbeds import get_testbed


def _quick(tmp_path, **kw):
    base = dict(plant="T1", budget=300, n_runs=2, output_dir=str(tmp_path / "out"))
    base.update(kw)
    return ExperimentConfig(**base)


# -- config ----------------------------------------------------------------------------

def test_minimal_config_is_fully_defaulted(tmp_path):
    ref = get_testbed("T3").baseline.with_mode("PI").values.tolist()
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"plant": "T3", "budget": 12000, "target": 0.5, "reference_gains": ref}))
    cfg = load_config(path)
    assert cfg.target == 0.5 and cfg.budget == 12000
    assert cfg.algo == "cmaes" and cfg.mode == "PI"
    assert cfg.tol_fun_hist == 1.5 and cfg.popsize == 9
    assert cfg.objective_spec().shift == pytest.approx(0.2 * 6.0)


def test_inline_plant_with_zero_target_rejected():
    plant = get_testbed("T1").to_dict()
    plant["targets"] = [0.0]
    with pytest.raises(ConfigError):
        ExperimentConfig(plant=plant, reference_gains=[1.0, 1.0])


def test_pid_mode_with_pi_length_reference_rejected():
    with pytest.raises(ConfigError, match="reference_gains: PID mode needs 9 entries"):
        ExperimentConfig(plant="T3", mode="PID", reference_gains=[1.0] * 6)


def test_unknown_keys_are_listed():
    with pytest.raises(ConfigError, match="bogus, zzz"):
        config_from_dict({"plant": "T1", "zzz": 1, "bogus": 2})


@pytest.mark.parametrize("field,value", [("n_runs", 0), ("budget", 0), ("reference_scale_sweep", [0.5]),
                                         ("algo", "ga"), ("objective", {"t_zero": 1.0})])
def test_invariant_violations_name_the_field(field, value):
    with pytest.raises(ConfigError, match=f"^{field}:"):
        ExperimentConfig(plant="T1", **{field: value})


def test_baseline_overrides(tmp_path, monkeypatch):
    import pidtune.harness as h

    seen = []
    real = h.run_pso
    monkeypatch.setattr(h, "run_pso", lambda *a: seen.append(a[-1]) or real(*a))
    cfg = _quick(tmp_path, algo="pso", pso={"swarm_size": 7}, n_runs=1)
    run_experiment(cfg, emit=False)
    assert seen[0].swarm_size == 7 and seen[0].phi1 == 2.0
    with pytest.raises(ConfigError, match="pso: unknown keys"):
        ExperimentConfig(plant="T1", pso={"inertia": 0.7})
    with pytest.raises(ConfigError, match="p_best"):
        ExperimentConfig(plant="T1", shade={"p_best": 0.0})


def test_missing_config_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.json")


# -- statistics ------------------------------------------------------------------------

def test_table_fixture_renders_exactly():
    row = StatsRow.from_counts("BEST", [268, 2267, 759], [True] * 3, 12000)
    assert row.render() == "268 2267 1098"


def test_unfinished_run_makes_average_a_lower_bound():
    row = StatsRow.from_counts("x", [500, 12000], [True, False], 12000)
    assert row.render() == "500 500 ≥6250"
    assert row.unfinished == 1 and row.lower_bound


def test_single_run_row():
    row = StatsRow.from_counts("x", [731], [True], 12000)
    assert row.min == row.max == row.avg == 731


def test_no_finished_runs_renders_dashes():
    row = StatsRow.from_counts("x", [100, 100], [False, False], 100)
    assert row.render() == "- - ≥100"


def test_render_table_has_header():
    rows = [StatsRow.from_counts("10^0", [1, 2], [True, True], 10)]
    assert render_table(rows).splitlines() == ["cell min max avg", "10^0 1 2 2"]


# -- outputs ---------------------------------------------------------------------------

def test_empty_rows_give_header_only_summary(tmp_path):
    emit_outputs([], [], tmp_path)
    assert (tmp_path / "summary.csv").read_text() == "cell,min,max,avg,lower_bound_flag,unfinished\n"
    assert (tmp_path / "runs.jsonl").read_text() == ""


def test_one_row_gives_two_line_csv(tmp_path):
    emit_outputs([StatsRow.from_counts("10^1", [3, 5], [True, False], 5)], [], tmp_path)
    lines = list(csv.reader(io.StringIO((tmp_path / "summary.csv").read_text())))
    assert lines == [["cell", "min", "max", "avg", "lower_bound_flag", "unfinished"],
                     ["10^1", "3", "3", "4.0", "1", "1"]]


def test_unwritable_output_reports_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        emit_outputs([], [], blocker / "sub")


def test_target_hit_trace_rescores_within_target(tmp_path):
    cfg = _quick(tmp_path, budget=2000, n_runs=1)
    rows = run_experiment(cfg)
    rec = rows[0].records[0]
    assert rec["stop_reason"] == TARGET_HIT
    trace = tmp_path / "out" / "trace_10p0_seed0.csv"
    assert trace.exists()
    assert trace.read_text().splitlines()[0] == "time,ch1_actual,ch1_target"
    rescored = cfg.plant_objective().evaluate(rec["best_point"]).value
    assert rescored <= cfg.target * (1 + 1e-12)
    assert rescored == pytest.approx(rec["best_value"], rel=1e-12)


@pytest.mark.parametrize("algo", ["cmaes", "pso", "shade"])
def test_best_value_rescores_for_every_algorithm(tmp_path, algo):
    cfg = _quick(tmp_path, algo=algo, n_runs=1, write_traces=False)
    rec = run_experiment(cfg, emit=False)[0].records[0]
    assert cfg.plant_objective().evaluate(rec["best_point"]).value == pytest.approx(rec["best_value"], rel=1e-12)


def test_outputs_are_byte_identical_across_runs_and_workers(tmp_path, monkeypatch):
    cfg = _quick(tmp_path, reference_scale_sweep=[0, 1])
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    monkeypatch.setenv("PIDTUNE_WORKERS", "2")
    run_experiment(cfg, tmp_path / "c")
    for name in ("summary.csv", "runs.jsonl"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()


def test_sweep_cells_use_scaled_reference(tmp_path):
    cfg = _quick(tmp_path, reference_scale_sweep=[-2, 1], n_runs=1)
    rows = run_experiment(cfg, emit=False)
    ref = np.asarray(cfg.reference_gains)
    for row, p in zip(rows, (-2, 1)):
        assert row.cell == f"10^{p}"
        np.testing.assert_array_equal(row.records[0]["reference"], ref * 10.0 ** p)


def test_seeds_follow_base_seed(tmp_path):
    rows = run_experiment(_quick(tmp_path, base_seed=5, n_runs=3), emit=False)
    assert [r["seed"] for r in rows[0].records] == [5, 6, 7]


def test_run_fault_is_recorded_not_fatal(tmp_path, monkeypatch):
    import pidtune.harness as h

    def boom(*a, **k):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(h, "run", boom)
    rows = run_experiment(_quick(tmp_path), emit=False)
    assert all(r["stop_reason"] == "FAULT" and "solver exploded" in r["error"] for r in rows[0].records)
    assert rows[0].unfinished == 2


def test_worker_env_override(monkeypatch, tmp_path):
    cfg = _quick(tmp_path, workers=3)
    monkeypatch.delenv("PIDTUNE_WORKERS", raising=False)
    assert worker_count(cfg) == 3
    monkeypatch.setenv("PIDTUNE_WORKERS", "5")
    assert worker_count(cfg) == 5
    monkeypatch.setenv("PIDTUNE_WORKERS", "0")
    with pytest.raises(ConfigError):
        worker_count(cfg)


# -- CLI -------------------------------------------------------------------------------

def _cli(*argv):
    buf = io.StringIO()
    rc = cli.main(list(argv), out=buf)
    return rc, buf.getvalue()


def test_cli_testbeds_lists_builtins():
    rc, out = _cli("testbeds")
    assert rc == 0
    assert [line.split("\t")[:2] for line in out.splitlines()] == [
        ["T1", "k=1"], ["T2", "k=2"], ["T3", "k=3"], ["T3hard", "k=3"]]
    assert all("horizon=" in line for line in out.splitlines())


def test_cli_simulate_writes_trace(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"plant": "T2"}))
    rc, out = _cli("simulate", "--config", str(cfg), "--gains", "0.5,1,0.3,0.6", "--out", str(tmp_path / "s"))
    assert rc == 0 and out.startswith("objective=")
    lines = (tmp_path / "s" / "trace.csv").read_text().splitlines()
    assert lines[0] == "time,ch1_actual,ch1_target,ch2_actual,ch2_target"
    assert len(lines) == 1 + 401


def test_cli_tune_twice_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        rc, _ = _cli("tune", "--plant", "T1", "--seed", "7", "--budget", "400", "--out", str(tmp_path / name))
        assert rc == 0
    assert (tmp_path / "a" / "runs.jsonl").read_bytes() == (tmp_path / "b" / "runs.jsonl").read_bytes()
    assert json.loads((tmp_path / "a" / "runs.jsonl").read_text())["seed"] == 7


def test_cli_bench_prints_table(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"plant": "T1", "n_runs": 2, "reference_scale_sweep": [0, 1]}))
    rc, out = _cli("bench", "--config", str(cfg), "--budget", "300", "--algo", "pso", "--out", str(tmp_path / "o"))
    assert rc == 0
    assert out.splitlines()[0].split() == ["cell", "min", "max", "avg"]
    assert [line.split()[0] for line in out.splitlines()[1:]] == ["10^0", "10^1"]


@pytest.mark.parametrize("argv", [
    ("tune", "--plant", "T9"),
    ("tune", "--budget", "many"),
    ("frobnicate",),
    ("simulate", "--plant", "T1", "--gains", "1,2,3"),
    ("simulate", "--plant", "T1", "--gains", "a,b"),
])
def test_cli_config_errors_exit_one(argv, tmp_path, capsys):
    rc, _ = _cli(*argv, *(() if argv[0] == "frobnicate" else ("--out", str(tmp_path))))
    assert rc == 1
    assert "config error" in capsys.readouterr().err


def test_cli_bad_config_file_exits_one(tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text("{not json")
    assert _cli("tune", "--config", str(bad))[0] == 1
    bad.write_text(json.dumps({"plant": "T1", "colour": "blue"}))
    assert _cli("tune", "--config", str(bad))[0] == 1


def test_cli_runtime_fault_exits_two(tmp_path, monkeypatch):
    import pidtune.harness as h

    monkeypatch.setattr(h, "run", lambda *a, **k: 1 / 0)
    rc, out = _cli("tune", "--plant", "T1", "--budget", "50", "--out", str(tmp_path))
    assert rc == 2 and "ZeroDivisionError" in out
