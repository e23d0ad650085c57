"""gvp-predict command line."""

import logging
import sys

from .cli import build_parser, run_command
from .errors import GvpError
from .log import setup_logging

_LOG = logging.getLogger(__name__)


def main_loop(argv: list[str] | None = None) -> int:
    """Entry point; returns the exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(args.debug)
    try:
        return run_command(args)
    except GvpError as err:
        _LOG.error("%s: %s", type(err).__name__, err)
        return err.exit_code


def run() -> None:
    """Console script."""
    sys.exit(main_loop())


if __name__ == "__main__":
    sys.exit(main_loop())
