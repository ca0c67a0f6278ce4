# cropsim/utils/seeding.py
import logging
import random

import numpy as np
import torch

logger = logging.getLogger(__name__)


def seed_everything(seed: int, deterministic: bool = True, num_threads: int = 0) -> None:
    """Seed python, numpy and torch; optionally force deterministic kernels."""
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    if torch.cuda.is_available():
        torch.cuda.manual_seed_all(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)
        torch.backends.cudnn.benchmark = False
        torch.backends.cudnn.deterministic = True
    if num_threads > 0:
        torch.set_num_threads(num_threads)
    logger.debug(f"Seeded RNGs with {seed} (deterministic={deterministic})")


def make_generator(seed: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(seed)
    return g


def derive_seed(*parts: int | str) -> int:
    """Stable 63-bit seed derived from a tuple of ints/strings (independent of PYTHONHASHSEED)."""
    acc = 1469598103934665603
    for part in parts:
        for byte in str(part).encode("utf-8") + b"\x1f":
            acc ^= byte
            acc = (acc * 1099511628211) % (1 << 64)
    return acc >> 1
