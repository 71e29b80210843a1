import logging
import sys

from common.utils.config import config


def setup_logging(name: str) -> logging.Logger:
    """Set up logging for the application."""
    log_config = config["logging"]
    level = getattr(logging, str(log_config["level"]).upper(), logging.WARNING)

    logger = logging.getLogger(name)
    logger.setLevel(level)

    # Avoid duplicate handlers
    if not logger.handlers:
        # stderr: stdout carries CLI output that users pipe around
        handler = logging.StreamHandler(sys.stderr)
        handler.setLevel(level)
        handler.setFormatter(logging.Formatter(log_config["format"]))
        logger.addHandler(handler)

    return logger
