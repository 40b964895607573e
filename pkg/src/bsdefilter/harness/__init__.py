"""Experiment harness: configuration, repeated trials, tables and the CLI."""

from .config import PRESETS, ExperimentConfig, ModelOverrides, dump_config, load_config, preset
from .experiment import (
    ExperimentError,
    Problem,
    RunResult,
    build_problem,
    emit_table,
    read_table,
    rmse,
    run_experiment,
    run_trial,
    simulate_trial,
    table_from_results,
)

__all__ = [
    "PRESETS",
    "ExperimentConfig",
    "ModelOverrides",
    "dump_config",
    "load_config",
    "preset",
    "ExperimentError",
    "Problem",
    "RunResult",
    "build_problem",
    "emit_table",
    "read_table",
    "rmse",
    "run_experiment",
    "run_trial",
    "simulate_trial",
    "table_from_results",
]
