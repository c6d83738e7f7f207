"""
lagflow command line
Numerical laboratory for graphical Lagrangian mean curvature flow
"""

import argparse
import sys
from typing import List, Optional

import structlog

from lagflow.commands import blowdown, expander, flow, presets, shrinker, study, translator
from lagflow.core.config import settings
from lagflow.core.exceptions import EXIT_USAGE, LagflowError
from lagflow.utils.logging import flow_logger, setup_logging

logger = structlog.get_logger()


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit 1 instead of argparse's 2, which is reserved for numerical failures"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog=settings.APP_NAME, description=__doc__.strip())
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.VERSION}")
    parser.add_argument("--log-level", help="override LAGFLOW_LOG_LEVEL")
    parser.add_argument("--log-format", choices=["json", "console"], help="override LAGFLOW_LOG_FORMAT")

    subparsers = parser.add_subparsers(dest="command", metavar="<command>", parser_class=ArgumentParser)
    subparsers.required = True

    # Include commands
    flow.register(subparsers)
    expander.register(subparsers)
    shrinker.register(subparsers)
    translator.register(subparsers)
    blowdown.register(subparsers)
    study.register(subparsers)
    presets.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # --help and --version exit 0, usage errors EXIT_USAGE
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    setup_logging(args.log_level, args.log_format)
    try:
        return args.handler(args)
    except LagflowError as exc:
        flow_logger.log_error(
            getattr(args, "run_id", None) or args.command,
            str(exc),
            {"command": args.command, "error_type": type(exc).__name__, "exit_code": exc.exit_code},
        )
        sys.stderr.write(f"{settings.APP_NAME} {args.command}: {exc}\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
