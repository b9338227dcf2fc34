import argparse
import sys

import structlog

from cli.commands import (
    add_config_arguments,
    config_from_args,
    output_dir,
    parse_floats,
    parse_list,
)
from lib.core.errors import ConfigError
from lib.core.experiments import SWEEP_PARAMETERS, compare_variants, sweep


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "ablate", help="lambda / tau sweeps and variant comparisons"
    )
    add_config_arguments(parser)
    parser.add_argument("--param", choices=sorted(SWEEP_PARAMETERS))
    parser.add_argument(
        "--values", help="comma-separated values of --param"
    )
    parser.add_argument(
        "--variants", help="comma-separated variants, e.g. full,g,w,d"
    )
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, logger: structlog.stdlib.BoundLogger) -> int:
    config = config_from_args(args)
    out = output_dir(args, config)
    if args.variants is not None:
        if args.param is not None:
            raise ConfigError("--variants excludes --param")
        table = compare_variants(
            config, parse_list(args.variants), out, logger=logger
        )
    else:
        if args.param is None or args.values is None:
            raise ConfigError("give --param with --values, or --variants")
        table = sweep(
            config, args.param, parse_floats(args.values), out, logger=logger
        )
    sys.stdout.write(table.to_tsv())
    return 0
