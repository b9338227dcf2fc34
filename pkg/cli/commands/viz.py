import argparse
import sys
from pathlib import Path

import structlog

from cli.commands import add_config_source_arguments, config_from_args
from lib.core.visualize import visualize


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "viz", help="write parsing, entropy and mask rasters"
    )
    parser.add_argument("--checkpoint", type=Path, required=True)
    parser.add_argument("--images", type=Path, nargs="+", required=True)
    parser.add_argument(
        "--labels",
        type=Path,
        nargs="+",
        help="part label rasters matching --images, for boundary statistics",
    )
    parser.add_argument(
        "--tau", type=float, help="mask threshold (default: config tau)"
    )
    add_config_source_arguments(parser)
    parser.add_argument("--out", type=Path, required=True)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, logger: structlog.stdlib.BoundLogger) -> int:
    config = config_from_args(args)
    structlog.contextvars.bind_contextvars(run_dir=str(args.out))
    result = visualize(
        args.checkpoint,
        args.images,
        args.out,
        tau=args.tau if args.tau is not None else config.tau,
        label_paths=args.labels,
        logger=logger,
    )
    sys.stdout.write(result.summary.read_text(encoding="utf-8"))
    return 0
