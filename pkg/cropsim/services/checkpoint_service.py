"""
cropsim/services/checkpoint_service.py
Self-describing checkpoint files: named parameter tensors plus plain metadata
"""

import logging
from pathlib import Path
from typing import Any

import torch

from cropsim.nn.critic import Critic
from cropsim.nn.generator import Generator
from cropsim.traits.biomass import BiomassRegressor
from cropsim.utils.config import TrainConfig, build_dataclass

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "cropsim-gan/1"
REGRESSOR_FORMAT = "cropsim-biomass/1"


class CheckpointService:
    def __init__(self, out_dir: str | Path | None = None):
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.stats = {"saved": 0, "loaded": 0}

    def save(self, payload: dict[str, Any], path: str | Path) -> Path:
        path = Path(path)
        if not path.is_absolute() and self.out_dir is not None:
            path = self.out_dir / path
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"format": CHECKPOINT_FORMAT, **payload}
        tmp = path.with_suffix(path.suffix + ".tmp")
        torch.save(payload, tmp)
        tmp.replace(path)
        self.stats["saved"] += 1
        logger.info(f"Checkpoint saved: {path} (epoch {payload.get('epoch')})")
        return path

    def load(self, path: str | Path, map_location: str | torch.device = "cpu") -> dict[str, Any]:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Checkpoint not found: {path}")
        payload = torch.load(path, map_location=map_location, weights_only=True)
        if payload.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a generator checkpoint (format={payload.get('format')!r})")
        self.stats["loaded"] += 1
        return payload

    @staticmethod
    def train_config(payload: dict[str, Any]) -> TrainConfig:
        return build_dataclass(TrainConfig, payload["train_config"])

    def build_models(
        self, payload: dict[str, Any], device: str | torch.device = "cpu"
    ) -> tuple[Generator, Critic, TrainConfig]:
        config = self.train_config(payload)
        generator = Generator(config.model)
        critic = Critic(config.model)
        generator.load_state_dict(payload["generator"])
        critic.load_state_dict(payload["critic"])
        dtype = torch.float64 if payload.get("dtype") == "float64" else torch.float32
        return generator.to(device=device, dtype=dtype), critic.to(device=device, dtype=dtype), config

    def save_regressor(
        self, regressor: BiomassRegressor, path: str | Path, metadata: dict[str, Any]
    ) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(
            {"format": REGRESSOR_FORMAT, "state_dict": regressor.state_dict(), **metadata}, path
        )
        self.stats["saved"] += 1
        logger.info(f"Biomass regressor saved: {path}")
        return path

    def load_regressor(
        self, path: str | Path, device: str | torch.device = "cpu"
    ) -> tuple[BiomassRegressor, dict[str, Any]]:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Regressor checkpoint not found: {path}")
        payload = torch.load(path, map_location=device, weights_only=True)
        if payload.get("format") != REGRESSOR_FORMAT:
            raise ValueError(f"{path} is not a biomass regressor checkpoint")
        regressor = BiomassRegressor()
        regressor.load_state_dict(payload["state_dict"])
        self.stats["loaded"] += 1
        return regressor.to(device).eval(), payload
