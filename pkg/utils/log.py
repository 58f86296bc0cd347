import os
import sys
from pathlib import Path

from loguru import logger

LOG_LEVEL_ENV = "QCLUSTER_LOG_LEVEL"
LOG_FORMAT = (
    "<green>{time:HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | "
    "<cyan>{extra[cell]}</cyan> | {message}"
)


def configure_logging(level: str | None = None, log_file: str | Path | None = None) -> None:
    """Replace loguru's default sink with stderr (and optionally a file) at ``level``."""
    level = (level or os.getenv(LOG_LEVEL_ENV) or "INFO").upper()
    logger.remove()
    logger.configure(extra={"cell": "-"})
    logger.add(sys.stderr, level=level, format=LOG_FORMAT)
    if log_file is not None:
        logger.add(log_file, level=level, format=LOG_FORMAT, colorize=False)
