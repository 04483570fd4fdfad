"""Command-line entry point."""

import argparse
import sys
from typing import List, Optional

from .core.config import settings
from .core.errors import handle_error
from .core.logging import logger, setup_logging
from .api import commands_check, commands_data, commands_train


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=settings.default_seed)
    common.add_argument("--jobs", type=int, default=settings.jobs, help="Parallel folds / samples")
    common.add_argument("--paper-scale", "--full-scale", dest="full_scale", action="store_true",
                        help="128x128 frames, 250 epochs and learning-rate grid search")
    common.add_argument("--log-level", default=None)

    parser = argparse.ArgumentParser(prog="tabattention", description=f"{settings.app_name} {settings.app_version}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Register commands
    commands_data.register(subparsers, [common])
    commands_train.register(subparsers, [common])
    commands_check.register(subparsers, [common])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_level:
        setup_logging(level=args.log_level)
    try:
        if args.writes and not getattr(args, "out", None):
            settings.setup_directories()
        logger.info("Command started", extra={"command": args.command, "seed": args.seed})
        return args.handler(args)
    except Exception as exc:
        return handle_error(exc)


if __name__ == "__main__":
    sys.exit(main())
