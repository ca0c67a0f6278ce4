"""
cropsim/services/inference_service.py
Generator inference from a checkpoint: predictions under arbitrary condition sets,
noise-draw variability and out-of-range condition checks
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import torch

from cropsim.dataset.models import ConditionSet
from cropsim.nn.conditioning import ConditionBatch
from cropsim.nn.generator import Generator, sample_noise
from cropsim.services.checkpoint_service import CheckpointService
from cropsim.utils.config import TrainConfig
from cropsim.utils.seeding import derive_seed

logger = logging.getLogger(__name__)


@dataclass
class VariabilityResult:
    samples: torch.Tensor  # N x C x H x W
    mean: torch.Tensor  # C x H x W
    std: torch.Tensor  # H x W, per-pixel std averaged over channels

    @property
    def overdrawn(self) -> torch.Tensor:
        """Std scaled by four and clipped to [0, 1] for display."""
        return (self.std * 4.0).clamp(0.0, 1.0)


class InferenceService:
    def __init__(
        self,
        generator: Generator,
        config: TrainConfig,
        *,
        condition_ranges: dict[str, Any] | None = None,
        extractor_source: str | None = None,
        device: str | torch.device = "cpu",
        batch_size: int = 16,
    ):
        self.generator = generator.to(device).eval()
        self.config = config
        self.device = torch.device(device)
        self.dtype = next(generator.parameters()).dtype
        self.ranges = condition_ranges or {}
        self.extractor_source = extractor_source
        self.batch_size = batch_size
        self.stats = {"generated": 0, "ood_requests": 0}

    @classmethod
    def from_checkpoint(
        cls, path: str | Path, device: str | torch.device = "cpu", batch_size: int = 16
    ) -> "InferenceService":
        checkpoints = CheckpointService()
        payload = checkpoints.load(path, map_location=device)
        generator, _, config = checkpoints.build_models(payload, device)
        logger.info(
            f"Loaded generator from {path} (epoch {payload.get('epoch')}, "
            f"conditions {','.join(config.conditions)})"
        )
        return cls(
            generator,
            config,
            condition_ranges=payload.get("condition_ranges"),
            extractor_source=payload.get("extractor_source"),
            device=device,
            batch_size=batch_size,
        )

    @property
    def conditions(self) -> tuple[str, ...]:
        return self.config.conditions

    def is_ood(self, y: ConditionSet) -> bool:
        """True when y lies outside the condition ranges seen in training."""
        t_range = self.ranges.get("t")
        if t_range and not t_range[0] <= y.t <= t_range[1]:
            return True
        bm_max = self.ranges.get("bm_max")
        if "b" in self.conditions and bm_max and y.b is not None:
            return any(v > limit for v, limit in zip(y.b, bm_max))
        return False

    def check_ranges(self, sets: list[ConditionSet]) -> list[bool]:
        flags = [self.is_ood(y) for y in sets]
        n_ood = sum(flags)
        if n_ood:
            self.stats["ood_requests"] += n_ood
            logger.warning(f"{n_ood}/{len(sets)} generation requests lie outside the trained condition range")
        return flags

    def _batch(self, sets: list[ConditionSet]) -> ConditionBatch:
        restricted = [y.restrict(self.conditions) for y in sets]
        return ConditionBatch.from_sets(restricted, self.conditions, self.device, self.dtype)

    def noise(self, n: int, seed: int) -> torch.Tensor:
        g = torch.Generator().manual_seed(seed)
        return sample_noise(n, self.config.model.z_dim, g, self.device, self.dtype)

    @torch.no_grad()
    def predict(
        self,
        x_in: torch.Tensor,
        y_in: list[ConditionSet],
        y_gen: list[ConditionSet],
        *,
        z: torch.Tensor | None = None,
        seed: int = 0,
    ) -> torch.Tensor:
        """Generate one image per (x_in, y_in, y_gen) row; a 3-D x_in is a single image."""
        single = x_in.ndim == 3
        if single:
            x_in = x_in[None]
        if not (len(x_in) == len(y_in) == len(y_gen)):
            raise ValueError("x_in, y_in and y_gen must have the same length")
        self.check_ranges(y_gen)
        if z is None:
            z = self.noise(len(x_in), seed)
        out = []
        for start in range(0, len(x_in), self.batch_size):
            stop = start + self.batch_size
            x = x_in[start:stop].to(device=self.device, dtype=self.dtype)
            out.append(
                self.generator(
                    x, self._batch(y_in[start:stop]), self._batch(y_gen[start:stop]), z[start:stop]
                ).cpu()
            )
        result = torch.cat(out)
        self.stats["generated"] += len(result)
        return result[0] if single else result

    def variability(
        self, x_in: torch.Tensor, y_in: ConditionSet, y_gen: ConditionSet, n_draws: int, seed: int = 0
    ) -> VariabilityResult:
        """n_draws predictions with fixed conditions and distinct noise."""
        if n_draws < 1:
            raise ValueError("n_draws must be >= 1")
        z = self.noise(n_draws, derive_seed(seed, "variability"))
        x = x_in[None].expand(n_draws, *x_in.shape)
        samples = self.predict(x, [y_in] * n_draws, [y_gen] * n_draws, z=z)
        samples = samples.to(torch.float64)
        std = samples.std(dim=0, unbiased=False).mean(dim=0)
        return VariabilityResult(samples=samples, mean=samples.mean(dim=0), std=std)
