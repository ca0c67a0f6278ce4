# cropsim/services/service_loader.py
import logging
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import torch

from cropsim.services.checkpoint_service import CheckpointService
from cropsim.services.inference_service import InferenceService
from cropsim.services.logging_service import RunLogger
from cropsim.services.training_service import TrainingService
from cropsim.traits.biomass import BiomassRegressor
from cropsim.utils.config import AppConfig, TrainConfig
from cropsim.utils.seeding import seed_everything

logger = logging.getLogger(__name__)


@dataclass
class TrainingServices:
    run_logger: RunLogger
    checkpoints: CheckpointService
    trainer: TrainingService


def _elapsed(start: datetime) -> float:
    return (datetime.utcnow() - start).total_seconds()


def prepare_runtime(app_config: AppConfig, seed: int) -> str:
    """Seed every RNG, apply determinism/thread settings and resolve the device."""
    seed_everything(seed, app_config.deterministic, app_config.num_threads)
    device = app_config.resolve_device()
    logger.info(f"Runtime ready: device={device}, seed={seed}, deterministic={app_config.deterministic}")
    return device


def init_training_services(
    config: TrainConfig,
    out_dir: str | Path,
    *,
    device: str = "cpu",
    dtype: torch.dtype = torch.float32,
    progress: bool = False,
) -> TrainingServices:
    logger.info("Starting training services initialization...")
    start_time = datetime.utcnow()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    run_logger = RunLogger(out_dir)
    checkpoints = CheckpointService(out_dir)
    try:
        trainer = TrainingService(
            config,
            device=device,
            dtype=dtype,
            out_dir=out_dir,
            run_logger=run_logger,
            checkpoints=checkpoints,
            progress=progress,
        )
    except Exception as e:
        logger.error(f"Failed to initialize training service: {e}")
        raise

    n_params_g = sum(p.numel() for p in trainer.generator.parameters())
    n_params_d = sum(p.numel() for p in trainer.critic.parameters())
    logger.info(
        f"Training services initialized in {_elapsed(start_time):.2f}s "
        f"(generator {n_params_g:,} params, critic {n_params_d:,} params, "
        f"extractor {trainer.extractor.source})"
    )
    return TrainingServices(run_logger=run_logger, checkpoints=checkpoints, trainer=trainer)


def init_inference_service(
    checkpoint: str | Path, *, device: str = "cpu", batch_size: int = 16
) -> InferenceService:
    logger.info(f"Loading inference service from {checkpoint}...")
    start_time = datetime.utcnow()
    service = InferenceService.from_checkpoint(checkpoint, device=device, batch_size=batch_size)
    logger.info(f"Inference service initialized in {_elapsed(start_time):.2f}s")
    return service


def init_regressor(path: str | Path | None, *, device: str = "cpu") -> BiomassRegressor | None:
    """Load the biomass estimator if a path is given; sweeps without one skip BM traits."""
    if path is None:
        logger.info("No biomass regressor configured - biomass traits disabled")
        return None
    start_time = datetime.utcnow()
    regressor, meta = CheckpointService().load_regressor(path, device)
    logger.info(
        f"Biomass regressor loaded in {_elapsed(start_time):.2f}s "
        f"(best epoch {meta.get('best_epoch')})"
    )
    return regressor
