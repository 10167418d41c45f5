"""Logging setup for the command-line entry point"""
import logging
import sys

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: str = "INFO") -> None:
    """Route the package logger to the current stderr (idempotent)"""
    logger = logging.getLogger("cdr_system")
    logger.setLevel(level.upper())
    for h in logger.handlers:
        if getattr(h, "_cdr_handler", False):
            h.setStream(sys.stderr)
            break
    else:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._cdr_handler = True
        logger.addHandler(handler)
    logger.propagate = False
