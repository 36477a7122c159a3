"""Command-line entry points.

    p2pshapley run     --config scenario.yaml [--mode M] [--samples-per-player INT]
                       [--seed INT] [--out PATH] [--format csv|json-lines] [--threads INT]
    p2pshapley sweep   --config scenario.yaml --sweep sweep.yaml --out DIR
    p2pshapley compare --exact exact.csv --estimated estimated.csv

Exit codes: 0 success, 2 configuration/validation problems, 3 runtime or I/O
failures.
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .experiment import run_experiment, sweep_adoption
from .report import estimation_error, read_report, write_report
from .scenario import MODES, ConfigError, load_config, load_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="p2pshapley",
        description="Shapley payoff allocation for peer-to-peer energy sharing games",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and write the payoff report")
    run.add_argument("--config", required=True)
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--samples-per-player", type=int, dest="samples_per_player")
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--format", choices=("csv", "json-lines"))
    run.add_argument("--threads", type=int)

    sweep = sub.add_parser("sweep", help="run a grid of adoption-rate points")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--sweep", required=True, dest="sweep_spec")
    sweep.add_argument("--out", required=True, help="output directory")
    sweep.add_argument("--threads", type=int)

    compare = sub.add_parser("compare", help="error metrics of an estimate vs an exact run")
    compare.add_argument("--exact", required=True)
    compare.add_argument("--estimated", required=True)
    return parser


def _apply_overrides(config, args):
    updates = {}
    if getattr(args, "mode", None):
        updates["mode"] = args.mode
    if getattr(args, "samples_per_player", None):
        if args.samples_per_player < 1:
            raise ConfigError("samples-per-player must be at least 1")
        updates["samples_per_player"] = args.samples_per_player
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "out", None):
        updates["output"] = args.out
    if getattr(args, "format", None):
        updates["format"] = args.format
    if getattr(args, "threads", None):
        if args.threads < 1:
            raise ConfigError("threads must be at least 1")
        updates["threads"] = args.threads
    return replace(config, **updates) if updates else config


def _cmd_run(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    report = run_experiment(config)
    write_report(report, config.output, config.format)
    print(
        f"wrote {config.output}: {report.n_players} prosumers, mode={report.mode}, "
        f"v(N)={report.v_grand:.6f}, payoff total={sum(r.payoff for r in report.rows):.6f}, "
        f"residual={report.efficiency_residual:.2e}, lp_solves={report.lp_solves}, "
        f"elapsed={report.elapsed_seconds:.2f}s"
    )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    points = load_sweep(args.sweep_spec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for (pv_rate, es_rate), report in sweep_adoption(config, points):
        name = f"pv{round(pv_rate * 100):03d}_es{round(es_rate * 100):03d}.{_ext(config.format)}"
        write_report(report, out_dir / name, config.format)
        print(
            f"{name}: v(N)={report.v_grand:.6f}, payoff total="
            f"{sum(r.payoff for r in report.rows):.6f}"
        )
    return EXIT_OK


def _ext(fmt: str) -> str:
    return "csv" if fmt == "csv" else "jsonl"


def _cmd_compare(args) -> int:
    exact = read_report(args.exact)
    estimated = read_report(args.estimated)
    try:
        metrics = estimation_error(exact, estimated)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(
        json.dumps(
            {
                "per_player_abs_error": [round(float(e), 9) for e in metrics.per_player],
                "mean_abs_error": metrics.mean_abs_error,
                "max_abs_error": metrics.max_abs_error,
                "mean_payoff_scale": metrics.mean_payoff_scale,
                "error_share_of_mean_payoff": metrics.error_share_of_mean_payoff,
            },
            indent=2,
        )
    )
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "compare": _cmd_compare}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # estimator caps, solver failures: runtime class
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
