"""
cropsim/utils/logging_config.py
Logging configuration
"""

import logging
import sys


def setup_logging(level: str = "INFO", log_file: str | None = "cropsim.log", quiet: list[str] | None = None):
    """Setup logging configuration"""
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True,
    )

    # Set specific loggers
    for name in quiet if quiet is not None else ["PIL", "matplotlib"]:
        logging.getLogger(name).setLevel(logging.WARNING)
