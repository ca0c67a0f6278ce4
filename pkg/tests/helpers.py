"""
tests/helpers.py
Narrow configs and condition batches for fast CPU tests
"""

import numpy as np
import torch

from cropsim.dataset.models import ConditionSet
from cropsim.nn.conditioning import ConditionBatch
from cropsim.utils.config import AugmentConfig, ModelConfig, TrainConfig


def narrow_model(conditions=("t",), **overrides) -> ModelConfig:
    params = dict(
        image_size=32,
        conditions=conditions,
        n_treatments=6,
        embed_dim=16,
        z_dim=16,
        base_channels=8,
        critic_channels=8,
    )
    params.update(overrides)
    return ModelConfig(**params)


def narrow_train_config(conditions=("t",), **overrides) -> TrainConfig:
    params = dict(
        lr=1e-4,
        batch_size=4,
        epochs=2,
        n_critic=2,
        seed=0,
        max_val_pairs=4,
        model=narrow_model(conditions),
        augment=AugmentConfig.disabled(),
    )
    params.update(overrides)
    return TrainConfig(**params)


def condition_batch(ts, conditions=("t",), c=None, b=None, dtype=torch.float32) -> ConditionBatch:
    sets = [
        ConditionSet(
            t=t,
            c=(c[i] if c is not None else 0) if "c" in conditions else None,
            b=(b[i] if b is not None else (1.0, 1.0)) if "b" in conditions else None,
        )
        for i, t in enumerate(ts)
    ]
    return ConditionBatch.from_sets(sets, conditions, "cpu", dtype)


def central_difference(fn, param: torch.Tensor, index: tuple[int, ...], h: float = 1e-6) -> float:
    """(fn(p + h) - fn(p - h)) / 2h for one entry of a parameter; fn returns a scalar tensor."""
    original = param.detach()[index].item()
    values = []
    for step in (h, -h):
        with torch.no_grad():
            param[index] = original + step
        values.append(fn().item())
    with torch.no_grad():
        param[index] = original
    return (values[0] - values[1]) / (2 * h)


def largest_entry(grad: torch.Tensor) -> tuple[int, ...]:
    flat = int(grad.abs().argmax())
    return tuple(int(i) for i in np.unravel_index(flat, tuple(grad.shape)))
