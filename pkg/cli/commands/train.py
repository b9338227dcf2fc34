import argparse
import sys

import structlog

from cli.commands import add_config_arguments, config_from_args, output_dir
from lib.core.trainer import Trainer


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "train", help="train a model and export gallery/probe descriptors"
    )
    add_config_arguments(parser)
    parser.add_argument(
        "--quiet", action="store_true", help="hide the progress bars"
    )
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, logger: structlog.stdlib.BoundLogger) -> int:
    config = config_from_args(args)
    trainer = Trainer(
        config,
        out_dir=output_dir(args, config),
        logger=logger,
        show_progress=not args.quiet,
    )
    result = trainer.run()
    sys.stdout.write(f"{result.run_dir}\n")
    return 0
