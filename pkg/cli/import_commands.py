import argparse

from cli.commands import ablate, evaluate, gen_data, serve, train, viz

COMMANDS = (gen_data, train, evaluate, ablate, viz, serve)


def import_commands(subparsers: argparse._SubParsersAction) -> None:
    """
    Register every subcommand on the CLI parser

    Args:
        subparsers: Subparser collection of the root parser
    """
    for command in COMMANDS:
        command.register(subparsers)
