import argparse
import sys
from pathlib import Path

import structlog

from cli.commands import add_config_source_arguments, config_from_args
from lib.core.descriptor_io import read_descriptor_file
from lib.core.errors import ConfigError
from lib.core.evaluation import evaluate_scores, pr_curve, score_matrix
from lib.core.trainer import CONFIG_FILE, GALLERY_FILE, PROBE_FILE


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "eval", help="evaluate exported probe descriptors against a gallery"
    )
    parser.add_argument(
        "--run", type=Path, help="run directory holding gallery/probe files"
    )
    parser.add_argument("--gallery", type=Path, help="gallery descriptor file")
    parser.add_argument("--probe", type=Path, help="probe descriptor file")
    parser.add_argument(
        "--aligned",
        action="store_true",
        help="rank by the aligned distance instead of the extended one",
    )
    parser.add_argument(
        "--max-rank", type=int, help="CMC length (default: config max_rank)"
    )
    add_config_source_arguments(parser)
    parser.add_argument(
        "--out", type=Path, help="report directory (default: gallery's)"
    )
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, logger: structlog.stdlib.BoundLogger) -> int:
    """
    Writes metrics.txt, metrics.kv, metrics_cmc.dat and pr_curve.tsv.

    Distance settings come from `--config`, else from the config the run
    directory was trained with, else the defaults.
    """
    gallery_file, probe_file = args.gallery, args.probe
    run_config = None
    if args.run is not None:
        gallery_file = gallery_file or args.run / GALLERY_FILE
        probe_file = probe_file or args.run / PROBE_FILE
        if (args.run / CONFIG_FILE).is_file():
            run_config = args.run / CONFIG_FILE
    if gallery_file is None or probe_file is None:
        raise ConfigError("give --run, or both --gallery and --probe")
    config = config_from_args(args, default_path=run_config)
    max_rank = args.max_rank if args.max_rank is not None else config.max_rank
    if max_rank < 1:
        raise ConfigError("--max-rank must be positive")
    out = args.out or gallery_file.parent
    structlog.contextvars.bind_contextvars(run_dir=str(out))

    scores = score_matrix(
        read_descriptor_file(gallery_file),
        read_descriptor_file(probe_file),
        config.distance,
        extended=not args.aligned,
    )
    report = evaluate_scores(scores, max_rank=max_rank)
    written = report.write(out)
    written.append(pr_curve(scores).write(Path(out) / "pr_curve.tsv"))
    logger.info(
        "Wrote metric report",
        files=[str(path) for path in written],
        rank1=report.rank(1),
        map=report.map,
        pr_auc=report.pr_auc,
    )
    sys.stdout.write(report.to_text())
    return 0
