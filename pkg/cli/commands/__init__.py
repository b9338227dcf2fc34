"""
Shared option handling of the CLI subcommands.
"""

import argparse
from pathlib import Path

import structlog

from lib.core.config import ExperimentConfig, load_config, run_dir
from lib.core.errors import ConfigError


def add_config_source_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config", type=Path, help="key = value experiment config file"
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key; repeatable",
    )
    parser.add_argument("--seed", type=int, help="override the seed")


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    add_config_source_arguments(parser)
    parser.add_argument(
        "--out", type=Path, help="output directory (default: run directory)"
    )


def config_from_args(
    args: argparse.Namespace, default_path: Path | None = None
) -> ExperimentConfig:
    """
    Config from `--config` (or `default_path` when absent), `--set` and
    `--seed`.
    """
    path = args.config if args.config is not None else default_path
    config = load_config(path, args.overrides, args.seed)
    structlog.contextvars.bind_contextvars(seed=config.seed)
    return config


def output_dir(args: argparse.Namespace, config: ExperimentConfig) -> Path:
    directory = args.out if args.out is not None else run_dir(config)
    structlog.contextvars.bind_contextvars(run_dir=str(directory))
    return directory


def parse_list(value: str) -> list[str]:
    items = [item.strip() for item in value.split(",") if item.strip()]
    if not items:
        raise ConfigError(f"empty list {value!r}")
    return items


def parse_floats(value: str) -> list[float]:
    try:
        return [float(item) for item in parse_list(value)]
    except ValueError as exc:
        raise ConfigError(f"not a list of numbers: {value!r}") from exc
