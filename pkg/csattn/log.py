"""
csattn/log.py

One place to configure logging for the CLI and the desktop viewer.
Library modules only ever call logging.getLogger(__name__).
"""

from __future__ import annotations

import logging
import sys

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(verbosity: int = 0) -> None:
    """
    Install one stderr handler on the root logger, replacing the one a
    previous call installed.

    verbosity:
        -1 -> WARNING, 0 -> INFO, 1+ -> DEBUG
    """
    if verbosity < 0:
        level = logging.WARNING
    elif verbosity == 0:
        level = logging.INFO
    else:
        level = logging.DEBUG

    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_csattn", False):
            root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._csattn = True
    root.addHandler(handler)
    root.setLevel(level)
