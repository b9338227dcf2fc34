"""
Experiment command line: `python -m cli <command> [options]`.

Exit codes: 0 on success, 2 on usage errors (bad flags, invalid
configuration, unknown variant), 1 on any other failure.
"""

import argparse
from collections.abc import Sequence

import structlog
from dotenv import load_dotenv

from cli.import_commands import import_commands
from lib.core.errors import ConfigError, UnknownVariantError
from lib.core.logger import initialize_logger

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="esa-reid",
        description="Entropy-mask semantic alignment re-ID experiments",
    )
    parser.add_argument(
        "--log-dir", default="logs", help="directory of the rotating log"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    import_commands(subparsers)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """
    Runs one CLI command.

    Args:
        argv: Arguments without the program name; defaults to sys.argv.

    Returns:
        Process exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    load_dotenv()
    initialize_logger("cli", args.log_dir)
    logger = structlog.get_logger("cli")
    structlog.contextvars.clear_contextvars()
    structlog.contextvars.bind_contextvars(command=args.command)

    try:
        return int(args.handler(args, logger))
    except (ConfigError, UnknownVariantError) as exc:
        logger.error("Invalid usage", error=str(exc))
        return EXIT_USAGE
    except Exception as exc:
        logger.error("Command failed", exc_info=exc)
        return EXIT_FAILURE
