import filecmp
import json
import math
import os
from dataclasses import replace

import numpy as np
import pytest

from bsdefilter.filter import FilterConfig
from bsdefilter.harness import (
    ExperimentError,
    dump_config,
    emit_table,
    load_config,
    preset,
    read_table,
    rmse,
    run_experiment,
    run_trial,
    simulate_trial,
    table_from_results,
)
from bsdefilter.harness.cli import main

TIMING_FILES = {"timing.csv", "table.csv", "table.txt"}


def tiny(experiment="example1", **kw):
    cfg = preset(experiment)
    base = dict(repeats=2, T=0.1, bsde=replace(cfg.bsde, n_points=20, mc_samples=4), apf_particles=(30, 60))
    base.update(kw)
    return replace(cfg, **base)


def same_outputs(a, b):
    names = sorted(set(os.listdir(a)) - TIMING_FILES)
    assert names == sorted(set(os.listdir(b)) - TIMING_FILES)
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    return not mismatch and not errors


# ---- rmse


def test_rmse_examples():
    truth = np.array([[1.0], [2.0]])
    assert rmse(truth, truth) == 0.0
    assert rmse(truth + [[3.0], [4.0]], truth) == pytest.approx(math.sqrt(12.5), abs=1e-15)
    assert rmse(np.array([[3.0], [4.0]]), np.zeros((2, 1))) == pytest.approx(3.5355339059327378)
    res = np.random.default_rng(0).normal(size=(30, 2))
    assert rmse(-2.5 * res, np.zeros_like(res)) == pytest.approx(2.5 * rmse(res, np.zeros_like(res)))
    with pytest.raises(ValueError):
        rmse(np.zeros((3, 1)), np.zeros((2, 1)))


# ---- config


@pytest.mark.parametrize("name", ["example1", "example2", "potential1", "potential2"])
def test_presets_round_trip(name):
    cfg = preset(name)
    assert load_config(text=dump_config(cfg)) == cfg


def test_custom_config_round_trip():
    text = """
[experiment]
name = example2
seed = 17
repeats = 3
workers = 2
methods = bsde
output_dir = out ; trailing comment
[grid]
T = 1.0
dt = 0.02
[model]
alpha = 0.5
kinematics = standard
R = 0.02, 0.2
[bsde]
n_points = 300
proposal_scale = 0.1, 0.1, 0.05, 0.05
shepard = as_printed
[apf]
particles = 1000, 2000
[output]
full_state_rmse = yes
"""
    cfg = load_config(text=text)
    assert cfg.experiment == "example2" and cfg.seed == 17 and cfg.T == 1.0
    assert cfg.model.R == (0.02, 0.2) and cfg.model.alpha == 0.5
    assert cfg.bsde.n_points == 300 and cfg.bsde.proposal_scale == (0.1, 0.1, 0.05, 0.05)
    assert cfg.apf_particles == (1000, 2000) and cfg.full_state_rmse
    assert load_config(text=dump_config(cfg)) == cfg


def test_config_rejects_unknown_and_invalid():
    with pytest.raises(ValueError, match="unknown key"):
        load_config(text="[bsde]\nparticles = 3\n")
    with pytest.raises(ValueError, match="unknown key"):
        load_config(text="[extra]\na = 1\n")
    with pytest.raises(ValueError):
        load_config(text="[experiment]\nrepeats = 0\n")
    with pytest.raises(ValueError):
        load_config(text="[experiment]\nname = nope\n")
    with pytest.raises(ValueError):
        load_config(text="[bsde]\nn_points = 1\n")


def test_command_line_experiment_wins():
    cfg = load_config(text="[experiment]\nname = example2\n", experiment="potential1")
    assert cfg.experiment == "potential1"


# ---- experiment runs


def test_trial_methods_share_measurements():
    cfg = tiny()
    trial = run_trial(cfg, 1)
    traj, meas = simulate_trial(cfg, 1)
    assert np.array_equal(trial.measurements, meas)
    assert np.array_equal(trial.truth, traj.states[1:])
    assert set(trial.rmse) == {"bsde", "apf30", "apf60"}


def test_aggregate_is_mean_of_trials(tmp_path):
    result = run_experiment(tiny(repeats=3, output_dir=str(tmp_path)))
    for m in result.methods:
        assert abs(m.mean_rmse - np.mean([t.rmse[m.label] for t in result.trials])) < 1e-12


def test_serial_and_parallel_runs_identical(tmp_path):
    a, b, c = (str(tmp_path / n) for n in "abc")
    run_experiment(tiny(output_dir=a))
    run_experiment(tiny(output_dir=b))
    run_experiment(tiny(output_dir=c, workers=2))
    assert same_outputs(a, b)
    assert same_outputs(a, c)


def test_example2_position_rmse_and_traces(tmp_path):
    cfg = tiny("example2", T=0.2, output_dir=str(tmp_path), apf_particles=(50,))
    result = run_experiment(cfg)
    header = (tmp_path / "trace_000.csv").read_text().splitlines()[0].split(",")
    assert header[:8] == ["step", "time", "truth_0", "truth_1", "truth_2", "truth_3", "meas_0", "meas_1"]
    assert "bsde_0" in header and "apf50_3" in header
    t = result.trials[0]
    pos = rmse(t.estimates["bsde"][:, :2], t.truth[:, :2])
    assert t.rmse["bsde"] == pytest.approx(pos)


def test_all_failed_method_raises_and_records(tmp_path):
    cfg = tiny(output_dir=str(tmp_path), model=replace(preset("example1").model, R=(0.0,)), methods="bsde")
    with pytest.raises(ExperimentError, match="all trials failed"):
        run_experiment(cfg)
    trials = (tmp_path / "trials.csv").read_text()
    assert "failed" in trials and "noiseless" in trials


def test_table_round_trip(tmp_path):
    result = run_experiment(tiny(output_dir=str(tmp_path)))
    text = emit_table(result)
    rows = read_table(str(tmp_path / "table.csv"))
    assert [r[0] for r in rows] == [
        "Backward SDE filter (20 space points)",
        "Auxiliary particle filter (30 particles)",
        "Auxiliary particle filter (60 particles)",
    ]
    for (title, secs, err), m in zip(rows, result.methods):
        assert secs == m.mean_seconds and err == m.mean_rmse
        assert title in text
    assert table_from_results(str(tmp_path)) == rows


def test_single_method_table(tmp_path):
    result = run_experiment(tiny(output_dir=str(tmp_path), methods="bsde"))
    assert len(read_table(str(tmp_path / "table.csv"))) == 1
    assert emit_table(result).count("\n") == 3


def test_example1_method_labels():
    cfg = preset("example1")
    from bsdefilter.harness.experiment import method_labels

    assert method_labels(cfg) == ["bsde", "apf400", "apf800", "apf1600", "apf3200"]


# ---- command line


def write_ini(tmp_path, body=""):
    path = tmp_path / "cfg.ini"
    path.write_text(
        "[grid]\nT = 0.1\n[bsde]\nn_points = 20\nmc_samples = 4\n[apf]\nparticles = 30\n[experiment]\nrepeats = 2\n" + body
    )
    return str(path)


def test_cli_subcommands(tmp_path, capsys):
    ini = write_ini(tmp_path)
    out = str(tmp_path / "o")
    assert main(["simulate", "--config", ini, "--out", out, "--seed", "5"]) == 0
    rows = (tmp_path / "o" / "simulate_000.csv").read_text().splitlines()
    assert rows[0] == "step,time,truth_0,meas_0" and len(rows) == 7
    assert main(["filter", "--config", ini, "--out", out, "--method", "both", "--trial", "1"]) == 0
    assert (tmp_path / "o" / "filter_001.csv").exists()
    assert main(["benchmark", "--config", ini, "--out", out, "--workers", "2"]) == 0
    printed = capsys.readouterr().out
    assert "Backward SDE filter (20 space points)" in printed
    assert main(["table", "--out", out]) == 0
    assert "Auxiliary particle filter (30 particles)" in capsys.readouterr().out


def test_cli_deterministic(tmp_path):
    ini = write_ini(tmp_path)
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert main(["simulate", "--config", ini, "--out", out]) == 0
        assert main(["filter", "--config", ini, "--out", out, "--method", "both"]) == 0
        assert main(["benchmark", "--config", ini, "--out", out]) == 0
    assert same_outputs(str(tmp_path / "a"), str(tmp_path / "b"))


def _error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(err)


def test_cli_usage_error(tmp_path, capsys):
    assert main(["simulate", "--seed", "-3", "--out", str(tmp_path)]) == 2
    rec = _error_line(capsys)
    assert rec["error"] == "ValueError" and "seed" in rec["message"]
    assert main(["simulate", "--config", str(tmp_path / "missing.ini")]) == 2
    assert _error_line(capsys)["error"] == "FileNotFoundError"


def test_cli_run_failure(tmp_path, capsys):
    ini = write_ini(tmp_path, "[model]\nR = 0\n")
    assert main(["benchmark", "--config", ini, "--out", str(tmp_path / "o"), "--method", "bsde"]) == 1
    assert _error_line(capsys)["error"] == "ExperimentError"
