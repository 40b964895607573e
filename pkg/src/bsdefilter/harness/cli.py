"""Command-line entry point: ``bsdefilter {simulate,filter,benchmark,table}``.

On failure a single JSON line ``{"error": ..., "message": ..., "stage": ...}``
goes to stderr and the exit status is nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from ..errors import FilterError
from .config import EXPERIMENTS, METHODS, load_config
from .experiment import (
    ExperimentError,
    emit_table,
    format_table,
    run_experiment,
    run_trial,
    simulate_trial,
    table_from_results,
    trace_rows,
    write_csv,
)

EXIT_FAILURE, EXIT_USAGE = 1, 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file layered over the experiment preset")
    p.add_argument("--experiment", choices=EXPERIMENTS, help="experiment preset (overrides the config file)")
    p.add_argument("--seed", type=int, help="root seed (nonnegative integer)")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bsdefilter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate truth and measurements for one trial")
    _common(p)
    p.add_argument("--trial", type=int, default=0)

    p = sub.add_parser("filter", help="run one method on one trial")
    _common(p)
    p.add_argument("--method", choices=METHODS, default="bsde")
    p.add_argument("--trial", type=int, default=0)

    p = sub.add_parser("benchmark", help="repeated comparison over all trials")
    _common(p)
    p.add_argument("--method", choices=METHODS, help="methods to run (default from config)")
    p.add_argument("--repeats", type=int)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("table", help="reformat a benchmark directory as the results table")
    p.add_argument("--out", required=True, help="benchmark output directory")
    return parser


def _config(args):
    cfg = load_config(args.config, experiment=args.experiment)
    changes = {}
    for key, attr in (("seed", "seed"), ("out", "output_dir"), ("method", "methods"), ("repeats", "repeats"), ("workers", "workers")):
        value = getattr(args, key, None)
        if value is not None:
            changes[attr] = value
    return replace(cfg, **changes)


def _simulate(args) -> None:
    cfg = _config(args)
    traj, meas = simulate_trial(cfg, args.trial)
    os.makedirs(cfg.output_dir, exist_ok=True)
    d, l = traj.states.shape[1], meas.shape[1]
    header = ["step", "time"] + [f"truth_{k}" for k in range(d)] + [f"meas_{k}" for k in range(l)]
    rows = [[str(0), repr(float(traj.times[0]))] + [repr(float(v)) for v in traj.states[0]] + [""] * l]
    for n in range(meas.shape[0]):
        rows.append(
            [str(n + 1), repr(float(traj.times[n + 1]))]
            + [repr(float(v)) for v in traj.states[n + 1]]
            + [repr(float(v)) for v in meas[n]]
        )
    path = os.path.join(cfg.output_dir, f"simulate_{args.trial:03d}.csv")
    write_csv(path, header, rows)
    print(path)


def _filter(args) -> None:
    cfg = _config(args)
    trial = run_trial(cfg, args.trial)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, f"filter_{args.trial:03d}.csv")
    write_csv(path, *trace_rows(cfg, trial))
    for label, err in trial.rmse.items():
        status = trial.errors.get(label, "ok")
        print(f"{label}\trmse={err!r}\tseconds={trial.seconds[label]:.3f}\t{status}")
    if trial.errors and len(trial.errors) == len(trial.rmse):
        raise ExperimentError("; ".join(trial.errors.values()))
    print(path)


def _benchmark(args) -> None:
    result = run_experiment(_config(args))
    print(emit_table(result), end="")
    print(os.path.join(result.config.output_dir, "table.csv"))


def _table(args) -> None:
    print(format_table(table_from_results(args.out)), end="")


def _error_line(err: BaseException) -> str:
    return json.dumps(
        {"error": type(err).__name__, "message": str(err), "stage": getattr(err, "stage", None)},
        sort_keys=True,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"simulate": _simulate, "filter": _filter, "benchmark": _benchmark, "table": _table}
    try:
        handlers[args.command](args)
    except (ValueError, OSError, KeyError) as err:
        print(_error_line(err), file=sys.stderr)
        return EXIT_USAGE
    except (FilterError, ExperimentError, FloatingPointError) as err:
        print(_error_line(err), file=sys.stderr)
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
