"""
cropsim/main.py
Bootstrap: load .env, configure logging, dispatch sub-commands
"""

import argparse
import logging
import sys
import time

from dotenv import load_dotenv

from cropsim import __version__
from cropsim.commands import COMMAND_MODULES, CommandError
from cropsim.services.training_service import TrainingDivergedError
from cropsim.utils.config import AppConfig
from cropsim.utils.logging_config import setup_logging

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cropsim",
        description="Conditional GAN crop growth simulation: synthesize, train, evaluate, simulate",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    for module in COMMAND_MODULES:
        module.register(subparsers)
    return parser


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    parser = build_parser()
    # argparse exits with code 2 and usage text on unknown flags
    args = parser.parse_args(argv)

    app_config = AppConfig()
    setup_logging(app_config.log_level, app_config.log_file or None, app_config.quiet_loggers)

    started = time.perf_counter()
    logger.info(f"cropsim {__version__}: running '{args.command}'")
    try:
        code = args.handler(args)
    except (CommandError, TrainingDivergedError, ValueError, OSError) as e:
        # ManifestError is a ValueError, FileNotFoundError an OSError
        logger.error(f"{args.command} failed: {e}")
        return 1
    elapsed = time.perf_counter() - started
    logger.info(f"'{args.command}' finished in {elapsed:.1f}s with exit code {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
