"""Command-line entry point: ``ovlab <experiment> [--config PATH] ...``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import config as config_mod
from . import experiments
from .config import RunConfig
from .linear import NumericalError
from .spectral import ConfigurationError

log = logging.getLogger("ovlab")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ovlab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in config_mod.EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--output", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="initial-condition seed (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for sweep members")
        if name == "audit":
            p.add_argument("run_dir", nargs="?", help="run directory to audit")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = config_mod.load(args.config) if args.config else RunConfig(experiment=args.command)
    cfg = dataclasses.replace(cfg, experiment=args.command)
    if args.output:
        cfg.output_dir = args.output
    if args.seed is not None:
        cfg.initial_condition.seed = args.seed
    if args.threads < 1:
        raise ConfigurationError("--threads must be >= 1")
    config_mod.validate(cfg)
    return cfg


def dispatch(cfg: RunConfig, args) -> int:
    if cfg.experiment == "dispersion":
        return experiments.cmd_dispersion(cfg)
    if cfg.experiment == "inflate":
        return experiments.cmd_inflate(cfg)
    if cfg.experiment == "simulate":
        return experiments.cmd_simulate(cfg)
    if cfg.experiment == "sweep":
        return experiments.cmd_sweep(cfg, threads=args.threads)
    run_dir = getattr(args, "run_dir", None) or cfg.run_dir or args.output
    if not run_dir:
        raise ConfigurationError("audit needs a run directory")
    return experiments.cmd_audit(run_dir)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return dispatch(cfg, args)
    except ConfigurationError as exc:
        log.error("configuration error: %s", exc)
        return experiments.EXIT_CONFIG
    except NumericalError as exc:
        log.error("integrator failure: %s", exc)
        return experiments.EXIT_INTEGRATOR
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return experiments.EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
