"""
Logging setup for gapmor.
Routes the package loggers through a rich handler on stderr.
"""

import logging
import os
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

ENV_VAR = "GAPMOR_LOG"
DEFAULT_LEVEL = "WARNING"
LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def resolve_level(level: Optional[str] = None, fallback: Optional[str] = None) -> str:
    """
    Pick the log level: explicit value, then GAPMOR_LOG, then ``fallback``,
    then WARNING.

    Raises:
        ValueError: If the chosen level is not recognized
    """
    chosen = level or os.environ.get(ENV_VAR) or fallback or DEFAULT_LEVEL
    chosen = str(chosen).upper()
    if chosen not in LEVELS:
        raise ValueError(f"Unknown log level '{chosen}', expected one of {', '.join(LEVELS)}")
    return chosen


def setup_logging(level: Optional[str] = None, fallback: Optional[str] = None) -> logging.Logger:
    """
    Configure the ``gapmor`` logger; calling it again replaces the handler.

    Returns:
        The package logger
    """
    logger = logging.getLogger("gapmor")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)
    logger.setLevel(resolve_level(level, fallback))
    logger.propagate = False
    return logger
