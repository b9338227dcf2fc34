import argparse
import sys

import structlog

from cli.commands import add_config_arguments, config_from_args, output_dir
from lib.core.synthdata import generate_dataset


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "gen-data", help="render the synthetic partial-person benchmark"
    )
    add_config_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, logger: structlog.stdlib.BoundLogger) -> int:
    """
    Writes the dataset to `--out`, or to `<run dir>/dataset`.
    """
    config = config_from_args(args)
    out = args.out
    if out is None:
        out = output_dir(args, config) / "dataset"
    manifest = generate_dataset(
        out,
        seed=config.seed,
        n_identities=config.data.n_identities,
        images_per_identity=config.data.images_per_identity,
        size=(config.model.input_height, config.model.input_width),
        workers=config.data.workers,
        logger=logger,
    )
    sys.stdout.write(f"{manifest.root}\n")
    return 0
