"""Repeated-trial comparison of the backward SDE filter and the APF.

Every trial owns the substream ``RngStream(seed, trial)``: child 0 simulates
truth and measurements, child 1 drives the BSDE filter and child ``(2, K)``
the APF with ``K`` particles.  Both methods therefore see the same data, and
results do not depend on how trials are scheduled across workers.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..apf import apf_run
from ..errors import FilterError
from ..filter import filter_run
from ..models import (
    JumpDiffusionModel,
    ObservationModel,
    build_potential_lattice,
    example1_grid,
    example1_model,
    example2_grid,
    example2_model,
    potential_grid,
    potential_surface_model,
    simulate_truth,
)
from ..models.potential import GriddedPotential
from ..stochastic import CompoundPoissonSpec, RngStream, TimeGrid
from .config import ExperimentConfig, dump_config, load_config

_TRUTH, _BSDE, _APF = 0, 1, 2
TRIAL_FAILURES = (FilterError, ValueError, FloatingPointError, np.linalg.LinAlgError)


class ExperimentError(RuntimeError):
    """Every trial of some method failed."""


@dataclass(frozen=True)
class Problem:
    model: JumpDiffusionModel
    obs: ObservationModel
    grid: TimeGrid
    error_dims: tuple[int, ...]


def _diag(values, dim: int, name: str) -> tuple[float, ...]:
    v = tuple(values)
    if len(v) == 1:
        return v * dim
    if len(v) != dim:
        raise ValueError(f"{name} needs 1 or {dim} entries, got {len(v)}")
    return v


def _jump(cfg: ExperimentConfig) -> CompoundPoissonSpec:
    rate = cfg.model.jump_rate
    return CompoundPoissonSpec() if rate is None else CompoundPoissonSpec(rate=rate)


def build_problem(cfg: ExperimentConfig) -> Problem:
    """Model, observation, time grid and error components for ``cfg``."""
    m = cfg.model
    if cfg.experiment == "example1":
        kw = {"jump": _jump(cfg)}
        if m.sigma is not None:
            kw["sigma"] = _diag(m.sigma, 1, "sigma")[0]
        if m.jump_scale is not None:
            kw["jump_scale"] = _diag(m.jump_scale, 1, "jump_scale")[0]
        if m.prior_var is not None:
            kw["prior_var"] = _diag(m.prior_var, 1, "prior_var")[0]
        if m.R is not None:
            kw["R"] = _diag(m.R, 1, "R")[0]
        model, obs = example1_model(**kw)
        grid, dims = example1_grid(), (0,)
    elif cfg.experiment == "example2":
        if m.sigma is not None or m.jump_scale is not None or m.jump_rate is not None:
            raise ValueError("example2 takes alpha, kinematics, prior_var and R overrides only")
        kw = {}
        if m.alpha is not None:
            kw["alpha"] = m.alpha
        if m.kinematics is not None:
            kw["kinematics"] = m.kinematics
        if m.prior_var is not None:
            kw["prior_cov"] = _diag(m.prior_var, 4, "prior_var")
        if m.R is not None:
            kw["R"] = _diag(m.R, 2, "R")
        model, obs = example2_model(**kw)
        grid = example2_grid()
        dims = (0, 1, 2, 3) if cfg.full_state_rmse else (0, 1)
    else:
        if cfg.experiment == "custom":
            if not m.surface_csv:
                raise ValueError("the custom experiment needs model.surface_csv")
            surface = GriddedPotential.from_csv(m.surface_csv)
        else:
            surface = build_potential_lattice(
                well_depth=1.0 if m.well_depth is None else m.well_depth,
                lattice_constant=1.0 if m.lattice_constant is None else m.lattice_constant,
                invert=cfg.experiment == "potential2",
            )
        kw = {"jump": _jump(cfg), "name": cfg.experiment}
        if m.sigma is not None:
            kw["sigma"] = _diag(m.sigma, 2, "sigma")
        if m.jump_scale is not None:
            kw["jump_coeff"] = _diag(m.jump_scale, 2, "jump_scale")
        if m.prior_var is not None:
            kw["prior_cov"] = _diag(m.prior_var, 2, "prior_var")
        if m.R is not None:
            kw["R"] = _diag(m.R, 2, "R")
        model, obs = potential_surface_model(surface, **kw)
        grid, dims = potential_grid(), (0, 1)
    if cfg.T is not None or cfg.dt is not None:
        grid = TimeGrid.from_dt(grid.T if cfg.T is None else cfg.T, grid.dt if cfg.dt is None else cfg.dt)
    return Problem(model, obs, grid, dims)


def rmse(estimates, truth) -> float:
    """``sqrt(mean_n ||estimate_n - truth_n||^2)`` over the rows."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError(f"shape mismatch: estimates {est.shape} vs truth {tru.shape}")
    if est.ndim == 1:
        est, tru = est[:, None], tru[:, None]
    return float(math.sqrt(np.mean(np.sum((est - tru) ** 2, axis=1))))


def method_labels(cfg: ExperimentConfig) -> list[str]:
    labels = ["bsde"] if cfg.uses_bsde else []
    if cfg.uses_apf:
        labels += [f"apf{K}" for K in cfg.apf_particles]
    return labels


def method_title(cfg: ExperimentConfig, label: str) -> str:
    if label == "bsde":
        return f"Backward SDE filter ({cfg.bsde.n_points} space points)"
    return f"Auxiliary particle filter ({int(label[3:])} particles)"


@dataclass(frozen=True)
class TrialResult:
    trial: int
    times: np.ndarray
    truth: np.ndarray
    measurements: np.ndarray
    estimates: dict[str, Optional[np.ndarray]]
    rmse: dict[str, float]
    seconds: dict[str, float]
    errors: dict[str, str]


def simulate_trial(cfg: ExperimentConfig, trial: int, problem: Problem | None = None):
    """Truth trajectory and measurements of one trial (shared by all methods)."""
    p = build_problem(cfg) if problem is None else problem
    return simulate_truth(p.model, p.obs, p.grid, RngStream(cfg.seed, trial).child(_TRUTH))


def run_trial(cfg: ExperimentConfig, trial: int, problem: Problem | None = None) -> TrialResult:
    """Simulate one trial and run every configured method on it.

    Timing covers the filter call only.  A method that fails records its
    error message and a NaN RMSE instead of aborting the trial.
    """
    p = build_problem(cfg) if problem is None else problem
    root = RngStream(cfg.seed, trial)
    traj, meas = simulate_trial(cfg, trial, p)
    truth = traj.states[1:]
    dims = list(p.error_dims)

    runners = {}
    if cfg.uses_bsde:
        runners["bsde"] = lambda: filter_run(p.model, p.obs, meas, p.grid, cfg.bsde, rng=root.child(_BSDE))
    if cfg.uses_apf:
        for K in cfg.apf_particles:
            runners[f"apf{K}"] = lambda K=K: apf_run(p.model, p.obs, meas, p.grid, K, root.child(_APF, K))

    estimates, errs, secs, errors = {}, {}, {}, {}
    for label, run in runners.items():
        start = time.perf_counter()
        try:
            out = run()
        except TRIAL_FAILURES as err:
            secs[label] = time.perf_counter() - start
            estimates[label], errs[label] = None, math.nan
            errors[label] = f"{type(err).__name__}: {err}"
            continue
        secs[label] = time.perf_counter() - start
        estimates[label] = out.estimates
        errs[label] = rmse(out.estimates[:, dims], truth[:, dims])
    return TrialResult(trial, p.grid.times[1:], truth, meas, estimates, errs, secs, errors)


@dataclass(frozen=True)
class MethodSummary:
    label: str
    title: str
    rmse: np.ndarray  # per trial, NaN where the trial failed
    seconds: np.ndarray

    @property
    def failed(self) -> np.ndarray:
        return np.flatnonzero(np.isnan(self.rmse))

    @property
    def mean_rmse(self) -> float:
        ok = self.rmse[~np.isnan(self.rmse)]
        return float(ok.mean()) if ok.size else math.nan

    @property
    def mean_seconds(self) -> float:
        return float(self.seconds.mean())


@dataclass(frozen=True)
class RunResult:
    config: ExperimentConfig
    methods: tuple[MethodSummary, ...]
    trials: tuple[TrialResult, ...]

    def method(self, label: str) -> MethodSummary:
        for m in self.methods:
            if m.label == label:
                return m
        raise KeyError(label)


def _trial_task(args):
    cfg, trial = args
    return run_trial(cfg, trial)


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunResult:
    """Run ``cfg.repeats`` trials (in parallel when ``cfg.workers > 1``) and aggregate in trial order."""
    tasks = [(cfg, k) for k in range(cfg.repeats)]
    if cfg.workers > 1 and cfg.repeats > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            trials = tuple(pool.map(_trial_task, tasks))
    else:
        problem = build_problem(cfg)
        trials = tuple(run_trial(cfg, k, problem) for k in range(cfg.repeats))
    methods = tuple(
        MethodSummary(
            label,
            method_title(cfg, label),
            np.array([t.rmse[label] for t in trials]),
            np.array([t.seconds[label] for t in trials]),
        )
        for label in method_labels(cfg)
    )
    result = RunResult(cfg, methods, trials)
    if write:
        write_results(result, cfg.output_dir)
    dead = [m.label for m in methods if m.failed.size == cfg.repeats]
    if dead:
        first = trials[0].errors.get(dead[0], "")
        raise ExperimentError(f"all trials failed for {', '.join(dead)} ({first})")
    return result


# ---------------------------------------------------------------- output


def _fmt(v: float) -> str:
    return repr(float(v))


def trace_rows(cfg: ExperimentConfig, trial: TrialResult) -> tuple[list[str], list[list[str]]]:
    """Header and rows of the per-step trace: step, time, truth, measurement, estimates."""
    d, l = trial.truth.shape[1], trial.measurements.shape[1]
    labels = method_labels(cfg)
    header = ["step", "time"] + [f"truth_{k}" for k in range(d)] + [f"meas_{k}" for k in range(l)]
    header += [f"{lab}_{k}" for lab in labels for k in range(d)]
    rows = []
    for n in range(trial.truth.shape[0]):
        row = [str(n + 1), _fmt(trial.times[n])]
        row += [_fmt(v) for v in trial.truth[n]] + [_fmt(v) for v in trial.measurements[n]]
        for lab in labels:
            est = trial.estimates[lab]
            row += ["nan"] * d if est is None else [_fmt(v) for v in est[n]]
        rows.append(row)
    return header, rows


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_results(result: RunResult, out_dir: str) -> list[str]:
    """Write result files; returns their paths.

    ``summary.csv``, ``trials.csv`` and the traces are pure functions of the
    config and seed.  Wall-clock numbers go to ``timing.csv`` and the table
    files only.  ``config.ini`` leaves out the output directory and worker
    count, which change where and how fast a run happens but not its results.
    """
    os.makedirs(out_dir, exist_ok=True)
    cfg = result.config
    paths = []

    def target(name):
        path = os.path.join(out_dir, name)
        paths.append(path)
        return path

    with open(target("config.ini"), "w") as fh:
        defaults = ExperimentConfig()
        fh.write(dump_config(replace(cfg, output_dir=defaults.output_dir, workers=defaults.workers)))
    write_csv(
        target("summary.csv"),
        ["method", "trials", "failed", "rmse"],
        [[m.label, str(cfg.repeats), str(m.failed.size), _fmt(m.mean_rmse)] for m in result.methods],
    )
    rows = []
    for t in result.trials:
        for m in result.methods:
            status = "ok" if m.label not in t.errors else "failed"
            rows.append([str(t.trial), m.label, _fmt(t.rmse[m.label]), status, t.errors.get(m.label, "")])
    write_csv(target("trials.csv"), ["trial", "method", "rmse", "status", "error"], rows)
    write_csv(
        target("timing.csv"),
        ["trial", "method", "seconds"],
        [[str(t.trial), m.label, _fmt(t.seconds[m.label])] for t in result.trials for m in result.methods],
    )
    if cfg.traces:
        for t in result.trials:
            write_csv(target(f"trace_{t.trial:03d}.csv"), *trace_rows(cfg, t))
    text = emit_table(result, target("table.csv"))
    with open(target("table.txt"), "w") as fh:
        fh.write(text)
    return paths


TABLE_HEADER = ("method", "cpu_seconds", "rmse")


def table_rows(result: RunResult) -> list[tuple[str, float, float]]:
    """One row per method in run order: title, mean seconds per trial, mean RMSE."""
    return [(m.title, m.mean_seconds, m.mean_rmse) for m in result.methods]


def format_table(rows) -> str:
    width = max([len(TABLE_HEADER[0])] + [len(r[0]) for r in rows])
    lines = [f"{'Numerical method':<{width}}  {'CPU time (s)':>12}  {'RMSE':>10}"]
    lines.append("-" * len(lines[0]))
    for title, secs, err in rows:
        lines.append(f"{title:<{width}}  {secs:>12.3f}  {err:>10.4f}")
    return "\n".join(lines) + "\n"


def emit_table(result: RunResult, csv_path: str | None = None) -> str:
    """Aligned text table in the Table-1 layout; also written as CSV when ``csv_path`` is given."""
    rows = table_rows(result)
    if csv_path is not None:
        write_csv(csv_path, TABLE_HEADER, [[t, _fmt(s), _fmt(e)] for t, s, e in rows])
    return format_table(rows)


def read_table(path: str) -> list[tuple[str, float, float]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TABLE_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [(r[0], float(r[1]), float(r[2])) for r in reader]


def table_from_results(out_dir: str) -> list[tuple[str, float, float]]:
    """Rebuild table rows from ``summary.csv``, ``timing.csv`` and ``config.ini`` in ``out_dir``."""
    cfg = load_config(os.path.join(out_dir, "config.ini"))
    with open(os.path.join(out_dir, "summary.csv"), newline="") as fh:
        summary = list(csv.DictReader(fh))
    with open(os.path.join(out_dir, "timing.csv"), newline="") as fh:
        timing = list(csv.DictReader(fh))
    rows = []
    for rec in summary:
        secs = [float(t["seconds"]) for t in timing if t["method"] == rec["method"]]
        rows.append((method_title(cfg, rec["method"]), float(np.mean(secs)), float(rec["rmse"])))
    return rows
