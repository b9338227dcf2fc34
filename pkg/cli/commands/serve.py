import argparse
import os
from pathlib import Path

import structlog
import uvicorn

from lib.core.align import Variant


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "serve", help="serve gallery queries over HTTP"
    )
    parser.add_argument("--checkpoint", type=Path, required=True)
    parser.add_argument("--gallery", type=Path, required=True)
    parser.add_argument("--tau", type=float, default=0.5)
    parser.add_argument("--variant", default="full")
    parser.add_argument(
        "--image-root",
        type=Path,
        help="directory query images must lie under (default: gallery's)",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, logger: structlog.stdlib.BoundLogger) -> int:
    """
    Hands the gallery settings to the server through its environment.
    """
    variant = Variant.parse(args.variant)
    os.environ["ESA_CHECKPOINT"] = str(args.checkpoint)
    os.environ["ESA_GALLERY"] = str(args.gallery)
    os.environ["ESA_TAU"] = str(args.tau)
    os.environ["ESA_VARIANT"] = variant.value
    if args.image_root is not None:
        os.environ["ESA_IMAGE_ROOT"] = str(args.image_root)
    logger.info("Starting query server", host=args.host, port=args.port)
    uvicorn.run("rest_server.main:server", host=args.host, port=args.port)
    return 0
