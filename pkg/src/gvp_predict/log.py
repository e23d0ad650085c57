"""Logging setup and the logging mixin."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import partialmethod
from typing import Any

import colorlog

_LOG = logging.getLogger(__name__)

LOG_FORMAT = "%(log_color)s%(levelname)-7s%(reset)s %(name)s: %(message)s"


def setup_logging(debug: int = 0) -> None:
    """Install a coloured handler on the root logger."""
    handler = colorlog.StreamHandler()
    handler.setFormatter(colorlog.ColoredFormatter(LOG_FORMAT))
    root = logging.getLogger()
    for old in list(root.handlers):
        if isinstance(old.formatter, colorlog.ColoredFormatter):
            root.removeHandler(old)
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if debug > 0 else logging.INFO)
    _LOG.debug("Logging initialised (debug=%s)", debug)


@dataclass
class LogBase:
    """Base class for logging with a per-class prefix."""

    _log_prefix = ""
    log_debug_level: int = field(default=1, repr=False, kw_only=True)

    def log_debugl(self, level: int, msg: str, *args: Any) -> None:
        """Log a debug message if the level is enabled."""
        if level <= self.log_debug_level:
            logging.getLogger(type(self).__module__).debug(
                self._log_prefix + msg, *args
            )

    log_debug = partialmethod(log_debugl, 1)
    log_debug2 = partialmethod(log_debugl, 2)

    def log_msg(self, level: int, msg: str, *args: Any) -> None:
        """Log a message at the given level."""
        logging.getLogger(type(self).__module__).log(
            level, self._log_prefix + msg, *args
        )

    log_warn = partialmethod(log_msg, logging.WARNING)
    log_error = partialmethod(log_msg, logging.ERROR)
    log_info = partialmethod(log_msg, logging.INFO)
