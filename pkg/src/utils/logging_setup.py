"""
Logging configuration shared by the CLI and the test suite.
"""

import logging
import os
from typing import Optional, Union

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
LOG_LEVEL_ENV = "STREAMFN_LOG_LEVEL"

_HANDLER_NAME = "streamfn-console"


def configure_logging(level: Optional[Union[str, int]] = None) -> logging.Logger:
    """
    Install a single stream handler on the ``src`` logger tree.

    Args:
        level: Level name or number; falls back to ``STREAMFN_LOG_LEVEL`` and then WARNING.

    Returns:
        The configured package logger.
    """
    if level is None:
        level = os.getenv(LOG_LEVEL_ENV, "WARNING")
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.WARNING

    root = logging.getLogger("src")
    root.setLevel(level)
    if not any(getattr(h, "name", None) == _HANDLER_NAME for h in root.handlers):
        handler = logging.StreamHandler()
        handler.set_name(_HANDLER_NAME)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
    return root
