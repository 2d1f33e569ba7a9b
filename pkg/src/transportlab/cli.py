"""Command-line entry point.

    transport-lab run <config.yaml> [--out DIR] [--seed N] [--workers N]
    transport-lab oracle <config.yaml> [--out DIR]
    transport-lab --version
"""
from __future__ import annotations

import argparse
import sys

from . import CONFIG_SCHEMA_VERSION, __version__
from .experiments import ConfigError, ExperimentError, load_config, run_experiment, validate_config


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transport-lab", description=__doc__)
    parser.add_argument(
        "--version",
        action="version",
        version=f"transport-lab {__version__} (config schema {CONFIG_SCHEMA_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run the experiment described by a config file")
    run_p.add_argument("config")
    run_p.add_argument("--out", default=None, help="output directory (overrides the config)")
    run_p.add_argument("--seed", type=int, default=None, help="seed override")
    run_p.add_argument("--workers", type=int, default=1, help="concurrent sweep cells")
    orc_p = sub.add_parser("oracle", help="emit the oracle reference table for a config")
    orc_p.add_argument("config")
    orc_p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.command == "oracle" and config.kind != "oracle-table":
            raise ConfigError("field 'kind': the oracle command requires kind 'oracle-table'")
        if getattr(args, "seed", None) is not None:
            raw = dict(config.raw)
            raw["seed"] = args.seed
            config = validate_config(raw)
        workers = getattr(args, "workers", 1)
        summary = run_experiment(config, out_dir=args.out, workers=workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ExperimentError, FloatingPointError) as exc:
        print(f"experiment aborted: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    print(f"{summary['experiment_id']}: wrote {summary['csv']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
