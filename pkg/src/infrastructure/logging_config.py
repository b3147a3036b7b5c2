"""
Logging setup: structlog's ProcessorFormatter on top of stdlib logging so
module loggers (logging.getLogger(__name__)) render consistently.

DVD_LOG_FORMAT=json switches to JSON lines; DVD_LOG_LEVEL sets the level.
"""

import logging
import os
import sys
from typing import Optional

import structlog

_handler: Optional[logging.Handler] = None


def configure_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> None:
    global _handler
    level = (level or os.getenv("DVD_LOG_LEVEL", "INFO")).upper()
    fmt = (fmt or os.getenv("DVD_LOG_FORMAT", "console")).lower()

    shared = [
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.processors.TimeStamper(fmt="iso"),
    ]
    renderer = (
        structlog.processors.JSONRenderer()
        if fmt == "json"
        else structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty())
    )
    formatter = structlog.stdlib.ProcessorFormatter(
        foreign_pre_chain=shared,
        processors=[structlog.stdlib.ProcessorFormatter.remove_processors_meta, renderer],
    )

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(formatter)
    root = logging.getLogger()
    if _handler is not None:
        root.removeHandler(_handler)
    root.addHandler(handler)
    root.setLevel(level)

    structlog.configure(
        processors=shared + [structlog.stdlib.ProcessorFormatter.wrap_for_formatter],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
    # matplotlib and PIL are chatty at debug level
    for noisy in ("matplotlib", "PIL"):
        logging.getLogger(noisy).setLevel(logging.WARNING)
    _handler = handler
