"""
Structured logging configuration.

Call configure_logging() once at CLI startup.
"""
import logging
import os
import sys


def resolve_level(name: str | None, default: int = logging.INFO) -> int:
    """Translate a level name such as "DEBUG" into a logging level."""
    if not name:
        return default
    level = logging.getLevelName(name.strip().upper())
    return level if isinstance(level, int) else default


def configure_logging(level: int | None = None) -> None:
    """Configure root logger with structured format."""
    if level is None:
        level = resolve_level(os.environ.get("REIFENBERG_LOG_LEVEL"))
    fmt = "%(asctime)s %(levelname)-8s %(name)s: %(message)s"
    logging.basicConfig(
        level=level,
        format=fmt,
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )
    # Suppress noisy third-party loggers
    logging.getLogger("reportlab").setLevel(logging.WARNING)
