import logging
import os
import sys
from logging import handlers
from pathlib import Path

import structlog

LOG_ROTATE_WHEN = os.getenv(key="LOG_ROTATE_WHEN", default="W6")
LOG_ROTATE_BACKUP = int(os.getenv(key="LOG_ROTATE_BACKUP", default="4"))
LOG_LEVEL = os.getenv(key="LOG_LEVEL", default="INFO")


def initialize_logger(logger_name: str, log_dir: str | Path = "logs") -> None:
    """
    Initialize logging for the given logger name

    Log records go to a rotating JSON file under `log_dir` and to stderr.

    Args:
        logger_name: Name of the logger, also the log file stem
        log_dir: Directory receiving the rotating log file

    Returns:
        None
    """
    log_dir = Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)

    # Configure standard logger to log to a rotating file and stderr
    file_handler = handlers.TimedRotatingFileHandler(
        filename=log_dir / f"{logger_name}.log",
        when=LOG_ROTATE_WHEN,
        backupCount=LOG_ROTATE_BACKUP,
        encoding="utf-8",
    )
    stream_handler = logging.StreamHandler(sys.stderr)
    level = logging.getLevelName(LOG_LEVEL)
    for handler in (file_handler, stream_handler):
        handler.setLevel(level)
    logging.basicConfig(
        format="%(message)s",
        level=level,
        handlers=[file_handler, stream_handler],
        force=True,
    )

    # Configure structlog
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.contextvars.merge_contextvars,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer(),
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )
