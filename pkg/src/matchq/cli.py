"""Command-line entry point.

Subcommands
  run <config>                 execute an experiment, write its artifact
  validate <config>            check a config without running anything
  emit-plot <artifact> <fig>   write tidy plot CSV from a run directory

Exit codes: 0 success, 1 run error, 2 config/schema error.  The output
root for artifacts defaults to $MATCHQ_OUT_ROOT (else ./matchq_out)
unless the config or --out names a directory.
"""

from __future__ import annotations

import argparse
import sys

from ._version import __version__
from .experiments import (
    ENV_OUT_ROOT,
    FIGURE_FILES,
    RunError,
    SchemaError,
    apply_overrides,
    emit_plot_data,
    load_config,
    resolve_out_dir,
    run,
)

EXIT_OK = 0
EXIT_RUN_ERROR = 1
EXIT_CONFIG_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="matchq",
        description="Matching-queue simulation and limit-process experiments.",
        epilog=f"Artifacts default to ${ENV_OUT_ROOT} or ./matchq_out.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a JSON config file")
    p_run.add_argument("--seed", type=int, default=None, help="override master_seed")
    p_run.add_argument("--reps", type=int, default=None, help="override replications")
    p_run.add_argument("--threads", type=int, default=None, help="override worker threads")
    p_run.add_argument("--out", default=None, help="override output directory")

    p_val = sub.add_parser("validate", help="validate a config and exit")
    p_val.add_argument("config", help="path to a JSON config file")

    p_emit = sub.add_parser("emit-plot", help="emit tidy plot data from an artifact")
    p_emit.add_argument("artifact", help="run directory containing manifest.txt")
    p_emit.add_argument("figure", help=f"one of: {', '.join(FIGURE_FILES)}")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            load_config(args.config)
            print("config ok")
            return EXIT_OK
        if args.command == "run":
            config = load_config(args.config)
            config = apply_overrides(
                config, seed=args.seed, reps=args.reps,
                threads=args.threads, out=args.out,
            )
            artifact = run(config)
            print(f"artifact written to {artifact.out_dir}")
            return EXIT_OK
        if args.command == "emit-plot":
            path = emit_plot_data(args.artifact, args.figure)
            print(f"wrote {path}")
            return EXIT_OK
    except SchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except RunError as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return EXIT_RUN_ERROR
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"run error: {exc!r}", file=sys.stderr)
        return EXIT_RUN_ERROR
    return EXIT_RUN_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
