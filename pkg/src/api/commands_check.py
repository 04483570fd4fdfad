"""Gradient check command."""

import argparse
import json

from ..services.gradcheck_service import gradcheck_service


def cmd_gradcheck(args: argparse.Namespace) -> int:
    """Print the worst relative error per op; a failing op exits with the numerical-check code."""
    report = gradcheck_service.run(seed=args.seed, include_model=not args.skip_model)
    print(json.dumps({"worst_error": report, "max": max(report.values())}, sort_keys=True))
    return 0


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("gradcheck", parents=parents, help="Check gradients against finite differences")
    parser.add_argument("--skip-model", action="store_true", help="Only check the individual ops")
    parser.set_defaults(handler=cmd_gradcheck, writes=False)
