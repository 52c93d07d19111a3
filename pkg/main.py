"""
Main entry point for aonkit
Command-line harness for approximated orthonormal normalisation experiments:
training runs, gradient checks, Taylor-order sweeps, mode comparisons and
checkpoint freezing.

Version 0.1.0 - Approximated orthonormal normalisation toolkit
"""
import os
import sys
import logging
import argparse
from typing import List, Optional

# Add lib directory to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from lib.utils.initialization import InitializationManager
from lib.utils.config import add_config_arguments
from lib.commands import (
    cmd_compare,
    cmd_freeze,
    cmd_gradcheck,
    cmd_ortho_sweep,
    cmd_train,
)
from version import __version__

logger = logging.getLogger("aonkit")


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with one sub-parser per command."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default=None,
                        help="DEBUG, INFO, WARNING or ERROR (default: AONKIT_LOG_LEVEL or INFO)")
    common.add_argument("--log-file", default=None,
                        help="also log to this file (default: AONKIT_LOG_FILE)")

    parser = argparse.ArgumentParser(
        prog="aonkit",
        description="Approximated orthonormal normalisation experiments",
    )
    parser.add_argument("--version", action="version", version=f"aonkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", parents=[common], help="train seeded repetitions, write metrics CSV")
    train.add_argument("--config", help="INI or YAML experiment config")
    add_config_arguments(train)
    train.set_defaults(handler=cmd_train)

    gradcheck = sub.add_parser("gradcheck", parents=[common],
                               help="compare backward passes with finite differences")
    gradcheck.add_argument("--q", default="0,1,2,4", help="Taylor orders, comma separated")
    gradcheck.add_argument("--shape", default="4x6,6x4,5x5", help="weight shapes, comma separated")
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument("--aon-only", action="store_true", help="skip layer and network checks")
    gradcheck.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    gradcheck.set_defaults(handler=cmd_gradcheck)

    sweep = sub.add_parser("ortho-sweep", parents=[common],
                           help="approximation error of P_q over random Gram spectra")
    sweep.add_argument("--q-list", default="0,1,2,3,4")
    sweep.add_argument("--spectrum", default="0.5,1.5", help="low,high Gram eigenvalue range")
    sweep.add_argument("--trials", type=int, default=100)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--rows", type=int, default=8)
    sweep.add_argument("--cols", type=int, default=16)
    sweep.add_argument("--out", default="runs")
    sweep.set_defaults(handler=cmd_ortho_sweep)

    compare = sub.add_parser("compare", parents=[common], help="run several modes and summarize")
    compare.add_argument("--config", help="INI or YAML experiment config")
    compare.add_argument("--modes", default="aon:2,sn,plain,orthreg",
                         help="modes to compare; aon:Q fixes the Taylor order")
    add_config_arguments(compare)
    compare.set_defaults(handler=cmd_compare)

    freeze = sub.add_parser("freeze", parents=[common], help="convert a checkpoint for inference")
    freeze.add_argument("--checkpoint", required=True, help="trainable checkpoint to freeze")
    freeze.add_argument("--out", default=None, help="frozen checkpoint path")
    freeze.set_defaults(handler=cmd_freeze)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, set up logging and dispatch to the sub-command."""
    args = build_parser().parse_args(argv)
    InitializationManager.initialize_application(args.log_level, args.log_file)
    logger.debug(f"aonkit {__version__}: {args.command}")
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
