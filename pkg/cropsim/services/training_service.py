"""
cropsim/services/training_service.py
CWGAN-GP optimization: gradient penalty, critic/generator steps, and the fit loop
with perceptual-distance model selection
"""

import copy
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch
from torch.utils.data import DataLoader
from tqdm import tqdm

from cropsim.dataset.models import SequenceRecord
from cropsim.dataset.sampling import (
    ImageCache,
    PairBatch,
    PairDataset,
    collate_pairs,
    compute_biomass_stats,
    plan_epoch,
)
from cropsim.metrics.image_quality import perceptual_distance
from cropsim.nn.conditioning import ConditionBatch
from cropsim.nn.critic import Critic
from cropsim.nn.feature_extractor import build_extractor
from cropsim.nn.generator import Generator, sample_noise
from cropsim.services.checkpoint_service import CheckpointService
from cropsim.services.logging_service import LogCategory, LogLevel, RunLogger
from cropsim.utils.config import TrainConfig, config_to_dict
from cropsim.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

MAX_CONSECUTIVE_ABORTS = 3

CriticFn = Callable[[torch.Tensor, torch.Tensor, ConditionBatch, ConditionBatch], torch.Tensor]


class NonFiniteLossError(RuntimeError):
    """A step produced a non-finite loss or gradient; no update was applied."""


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class StepBatch:
    x_in: torch.Tensor
    x_ref: torch.Tensor
    y_in: ConditionBatch
    y_gen: ConditionBatch

    def __len__(self) -> int:
        return self.x_in.shape[0]

    @classmethod
    def from_pairs(
        cls,
        batch: PairBatch,
        conditions: tuple[str, ...],
        device: torch.device | str = "cpu",
        dtype: torch.dtype = torch.float32,
    ) -> "StepBatch":
        return cls(
            x_in=batch.x_in.to(device=device, dtype=dtype),
            x_ref=batch.x_ref.to(device=device, dtype=dtype),
            y_in=ConditionBatch.from_sets(batch.y_in, conditions, device, dtype),
            y_gen=ConditionBatch.from_sets(batch.y_gen, conditions, device, dtype),
        )


@dataclass
class CriticStepResult:
    loss_d: float
    wasserstein: float
    gp: float
    score_real: float
    score_fake: float


def _require_finite(kind: str, name: str, value: torch.Tensor) -> None:
    if not torch.isfinite(value).all():
        raise NonFiniteLossError(f"{kind} step aborted: non-finite {name}")


def _require_finite_grads(kind: str, module: torch.nn.Module) -> None:
    for pname, param in module.named_parameters():
        if param.grad is not None and not torch.isfinite(param.grad).all():
            raise NonFiniteLossError(f"{kind} step aborted: non-finite gradient in {pname}")


def gradient_penalty(
    critic: CriticFn,
    x_ref: torch.Tensor,
    x_gen: torch.Tensor,
    x_in: torch.Tensor,
    y_in: ConditionBatch,
    y_gen: ConditionBatch,
    eps: torch.Tensor | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """
    Mean over the batch of (||grad_xhat critic(xhat, x_in, y_in, y_gen)||_2 - 1)^2,
    xhat = eps * x_ref + (1 - eps) * x_gen with one eps ~ U[0, 1] per element.
    """
    if x_ref.shape != x_gen.shape:
        raise ValueError(f"reference {tuple(x_ref.shape)} and generated {tuple(x_gen.shape)} differ")
    n = x_ref.shape[0]
    if eps is None:
        eps = torch.rand(n, generator=generator, dtype=x_ref.dtype).to(x_ref.device)
    eps = eps.to(dtype=x_ref.dtype, device=x_ref.device).view(n, *([1] * (x_ref.ndim - 1)))
    x_hat = (eps * x_ref.detach() + (1.0 - eps) * x_gen.detach()).requires_grad_(True)
    scores = critic(x_hat, x_in, y_in, y_gen)
    (grads,) = torch.autograd.grad(scores.sum(), x_hat, create_graph=True)
    _require_finite("critic", "gradient-penalty gradient", grads)
    norms = grads.flatten(start_dim=1).norm(2, dim=1)
    return ((norms - 1.0) ** 2).mean()


def critic_step(
    generator: Generator,
    critic: Critic,
    optimizer: torch.optim.Optimizer,
    batch: StepBatch,
    z: torch.Tensor,
    lambda_gp: float,
    eps: torch.Tensor | None = None,
) -> CriticStepResult:
    """loss_D = mean D(x_gen) - mean D(x_ref) + lambda * GP; one update on the critic only."""
    with torch.no_grad():
        x_gen = generator(batch.x_in, batch.y_in, batch.y_gen, z)
    score_real = critic(batch.x_ref, batch.x_in, batch.y_in, batch.y_gen)
    score_fake = critic(x_gen, batch.x_in, batch.y_in, batch.y_gen)
    wasserstein = score_fake.mean() - score_real.mean()
    if lambda_gp > 0:
        gp = gradient_penalty(critic, batch.x_ref, x_gen, batch.x_in, batch.y_in, batch.y_gen, eps)
        loss = wasserstein + lambda_gp * gp
    else:
        gp = torch.zeros((), dtype=wasserstein.dtype, device=wasserstein.device)
        loss = wasserstein
    _require_finite("critic", "loss", loss)

    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    try:
        _require_finite_grads("critic", critic)
    except NonFiniteLossError:
        optimizer.zero_grad(set_to_none=True)
        raise
    optimizer.step()
    return CriticStepResult(
        loss_d=float(loss.detach()),
        wasserstein=float(wasserstein.detach()),
        gp=float(gp.detach()),
        score_real=float(score_real.detach().mean()),
        score_fake=float(score_fake.detach().mean()),
    )


def generator_step(
    generator: Generator,
    critic: Critic,
    optimizer: torch.optim.Optimizer,
    batch: StepBatch,
    z: torch.Tensor,
) -> float:
    """loss_G = -mean D(x_gen); the critic is frozen for the step."""
    flags = [p.requires_grad for p in critic.parameters()]
    critic.requires_grad_(False)
    try:
        x_gen = generator(batch.x_in, batch.y_in, batch.y_gen, z)
        loss = -critic(x_gen, batch.x_in, batch.y_in, batch.y_gen).mean()
        _require_finite("generator", "loss", loss)
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        try:
            _require_finite_grads("generator", generator)
        except NonFiniteLossError:
            optimizer.zero_grad(set_to_none=True)
            raise
        optimizer.step()
    finally:
        for p, flag in zip(critic.parameters(), flags):
            p.requires_grad_(flag)
    return float(loss.detach())


def select_best_epoch(history: list[float], epochs: list[int] | None = None) -> int:
    """Epoch (1-based unless explicit epochs are given) with the lowest validation value."""
    if not history:
        raise ValueError("empty validation history")
    index = int(np.argmin(history))
    return epochs[index] if epochs is not None else index + 1


def condition_ranges(records: list[SequenceRecord]) -> dict[str, Any]:
    times = [t for r in records for t in r.times]
    biomass = [bm for r in records for t in r.times if (bm := r.biomass(t)) is not None]
    return {
        "t": [min(times), max(times)] if times else None,
        "bm_max": [max(b[0] for b in biomass), max(b[1] for b in biomass)] if biomass else None,
    }


class TrainingService:
    def __init__(
        self,
        config: TrainConfig,
        *,
        device: str | torch.device = "cpu",
        dtype: torch.dtype = torch.float32,
        out_dir: str | Path | None = None,
        run_logger: RunLogger | None = None,
        checkpoints: CheckpointService | None = None,
        progress: bool = False,
    ):
        self.config = config
        self.device = torch.device(device)
        self.dtype = dtype
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.run_logger = run_logger or RunLogger(self.out_dir)
        self.checkpoints = checkpoints or CheckpointService(self.out_dir)
        self.progress = progress

        torch.manual_seed(config.seed)
        self.generator = Generator(config.model).to(device=self.device, dtype=dtype)
        self.critic = Critic(config.model).to(device=self.device, dtype=dtype)
        betas = tuple(config.adam_betas)
        self.opt_g = torch.optim.Adam(self.generator.parameters(), lr=config.lr, betas=betas)
        self.opt_d = torch.optim.Adam(self.critic.parameters(), lr=config.lr, betas=betas)
        self.extractor = build_extractor(config.extractor, config.extractor_seed).to(
            device=self.device, dtype=dtype
        )
        self.noise = torch.Generator().manual_seed(derive_seed(config.seed, "noise"))

        self.epoch = 0
        self.global_step = 0
        self.consecutive_aborts = 0
        self.val_epochs: list[int] = []
        self.val_history: list[float] = []
        self.best_metric = math.inf
        self.best_epoch = 0
        self.biomass_stats: tuple[list[float], list[float]] = ([0.0, 0.0], [1.0, 1.0])
        self.ranges: dict[str, Any] = {}
        self.stats = {
            "critic_steps": 0,
            "generator_steps": 0,
            "aborted_steps": 0,
            "validations": 0,
        }

    # ---- setup ----

    def prepare(self, train_records: list[SequenceRecord]) -> None:
        if not train_records:
            raise ValueError("training split is empty")
        if "b" in self.config.conditions:
            missing = [r.sequence_id for r in train_records if not r.has_biomass()]
            if missing:
                raise ValueError(f"biomass conditioning needs labels; missing in {missing[:5]}")
        mean, std = compute_biomass_stats(train_records)
        self.biomass_stats = (mean, std)
        self.generator.set_biomass_stats(mean, std)
        self.critic.set_biomass_stats(mean, std)
        self.ranges = condition_ranges(train_records)
        self.run_logger.log(
            LogCategory.DATA,
            LogLevel.INFO,
            "Training data prepared",
            {"sequences": len(train_records), "bm_mean": mean, "bm_std": std},
        )

    # ---- steps ----

    def _noise(self, n: int) -> torch.Tensor:
        return sample_noise(n, self.config.model.z_dim, self.noise, self.device, self.dtype)

    def train_step(self, batch: StepBatch) -> tuple[CriticStepResult | None, float | None]:
        """One critic step; every n_critic-th step also updates the generator on the same batch."""
        self.generator.train()
        self.critic.train()
        result = loss_g = None
        try:
            eps = torch.rand(len(batch), generator=self.noise, dtype=self.dtype).to(self.device)
            result = critic_step(
                self.generator,
                self.critic,
                self.opt_d,
                batch,
                self._noise(len(batch)),
                self.config.lambda_gp,
                eps,
            )
            self.stats["critic_steps"] += 1
            if (self.global_step + 1) % self.config.n_critic == 0:
                loss_g = generator_step(
                    self.generator, self.critic, self.opt_g, batch, self._noise(len(batch))
                )
                self.stats["generator_steps"] += 1
            self.consecutive_aborts = 0
        except NonFiniteLossError as e:
            self.stats["aborted_steps"] += 1
            self.consecutive_aborts += 1
            self.run_logger.log(
                LogCategory.TRAIN,
                LogLevel.WARNING,
                str(e),
                {"step": self.global_step, "consecutive": self.consecutive_aborts},
            )
            if self.consecutive_aborts >= MAX_CONSECUTIVE_ABORTS:
                raise TrainingDivergedError(
                    f"{self.consecutive_aborts} consecutive non-finite steps at step {self.global_step}"
                ) from e
        finally:
            self.global_step += 1
        return result, loss_g

    def train_epoch(self, records: list[SequenceRecord], cache: ImageCache) -> dict[str, float]:
        epoch_seed = derive_seed(self.config.seed, "epoch", self.epoch)
        plan = plan_epoch(records, epoch_seed)
        dataset = PairDataset(
            records, plan, cache=cache, augment_config=self.config.augment, seed=epoch_seed
        )
        loader = DataLoader(
            dataset,
            batch_size=self.config.batch_size,
            shuffle=False,
            num_workers=self.config.num_workers,
            collate_fn=collate_pairs,
            drop_last=len(dataset) > self.config.batch_size,
        )
        loss_d, loss_g, gp = [], [], []
        for pairs in tqdm(loader, desc=f"epoch {self.epoch}", disable=not self.progress, leave=False):
            batch = StepBatch.from_pairs(pairs, self.config.conditions, self.device, self.dtype)
            result, g = self.train_step(batch)
            if result is not None:
                loss_d.append(result.loss_d)
                gp.append(result.gp)
            if g is not None:
                loss_g.append(g)
        return {
            "loss_D": float(np.mean(loss_d)) if loss_d else math.nan,
            "loss_G": float(np.mean(loss_g)) if loss_g else math.nan,
            "GP": float(np.mean(gp)) if gp else math.nan,
        }

    # ---- validation ----

    @torch.no_grad()
    def validate(self, records: list[SequenceRecord], cache: ImageCache | None = None) -> float:
        """Mean perceptual distance over one seeded pair per validation image, fixed noise per pair."""
        if not records:
            raise ValueError("validation split is empty")
        cache = cache or ImageCache(records, self.config.image_size)
        plan = plan_epoch(records, derive_seed(self.config.seed, "val"))
        if self.config.max_val_pairs is not None:
            plan = plan[: self.config.max_val_pairs]
        noise = torch.Generator().manual_seed(derive_seed(self.config.seed, "val-noise"))
        z_all = sample_noise(len(plan), self.config.model.z_dim, noise, self.device, self.dtype)
        dataset = PairDataset(records, plan, cache=cache)

        self.generator.eval()
        distances = []
        for start in range(0, len(plan), self.config.batch_size):
            idx = range(start, min(start + self.config.batch_size, len(plan)))
            pairs = collate_pairs([dataset[i] for i in idx])
            batch = StepBatch.from_pairs(pairs, self.config.conditions, self.device, self.dtype)
            x_gen = self.generator(batch.x_in, batch.y_in, batch.y_gen, z_all[start : start + len(idx)])
            distances.append(perceptual_distance(x_gen, batch.x_ref, self.extractor).cpu())
        self.stats["validations"] += 1
        return float(torch.cat(distances).mean())

    # ---- checkpoints ----

    def state_payload(self, val_metric: float | None) -> dict[str, Any]:
        """Detached snapshot of the run; later steps never write into it."""
        return {
            "generator": copy.deepcopy(self.generator.state_dict()),
            "critic": copy.deepcopy(self.critic.state_dict()),
            "opt_g": copy.deepcopy(self.opt_g.state_dict()),
            "opt_d": copy.deepcopy(self.opt_d.state_dict()),
            "epoch": self.epoch,
            "global_step": self.global_step,
            "train_config": config_to_dict(self.config),
            "dtype": "float64" if self.dtype == torch.float64 else "float32",
            "rng": {"torch": torch.get_rng_state(), "noise": self.noise.get_state()},
            "history": {
                "epochs": list(self.val_epochs),
                "val_perceptual": list(self.val_history),
                "rows": [dict(r) for r in self.run_logger.epoch_rows],
            },
            "best": {"epoch": self.best_epoch, "val_perceptual": self.best_metric},
            "val_metric": val_metric,
            "extractor_source": self.extractor.source,
            "biomass_stats": {"mean": self.biomass_stats[0], "std": self.biomass_stats[1]},
            "condition_ranges": self.ranges,
        }

    def load_state(self, payload: dict[str, Any]) -> None:
        """Resume: weights, optimizer states, RNG states and histories."""
        self.generator.load_state_dict(payload["generator"])
        self.critic.load_state_dict(payload["critic"])
        self.opt_g.load_state_dict(payload["opt_g"])
        self.opt_d.load_state_dict(payload["opt_d"])
        self.epoch = int(payload["epoch"])
        self.global_step = int(payload.get("global_step", 0))
        torch.set_rng_state(payload["rng"]["torch"])
        self.noise.set_state(payload["rng"]["noise"])
        history = payload.get("history", {})
        self.val_epochs = [int(e) for e in history.get("epochs", [])]
        self.val_history = [float(v) for v in history.get("val_perceptual", [])]
        self.run_logger.restore_epochs(history.get("rows", []))
        best = payload.get("best", {})
        self.best_epoch = int(best.get("epoch", 0))
        self.best_metric = float(best.get("val_perceptual", math.inf))
        stats = payload.get("biomass_stats")
        if stats:
            self.biomass_stats = (list(stats["mean"]), list(stats["std"]))
        self.ranges = payload.get("condition_ranges", {})

    # ---- fit ----

    def fit(
        self,
        train_records: list[SequenceRecord],
        val_records: list[SequenceRecord],
        resume_from: dict[str, Any] | None = None,
    ) -> dict[str, Any]:
        """Train for config.epochs; returns the best checkpoint payload (lowest validation distance)."""
        if not val_records:
            raise ValueError("validation split is empty")
        self.prepare(train_records)
        if resume_from is not None:
            self.load_state(resume_from)
            self.run_logger.log(
                LogCategory.CHECKPOINT, LogLevel.INFO, f"Resumed at epoch {self.epoch}"
            )
        train_cache = ImageCache(train_records, self.config.image_size)
        val_cache = ImageCache(val_records, self.config.image_size)
        best_payload = None

        while self.epoch < self.config.epochs:
            losses = self.train_epoch(train_records, train_cache)
            self.epoch += 1
            val_metric = None
            if self.epoch % self.config.val_interval == 0 or self.epoch == self.config.epochs:
                val_metric = self.validate(val_records, val_cache)
                self.val_epochs.append(self.epoch)
                self.val_history.append(val_metric)
                self.run_logger.log(
                    LogCategory.VALIDATION,
                    LogLevel.INFO,
                    f"Validation at epoch {self.epoch}",
                    {"val_perceptual": val_metric},
                )
            self.run_logger.log_epoch(self.epoch, losses["loss_D"], losses["loss_G"], losses["GP"], val_metric)

            if val_metric is not None and val_metric < self.best_metric:
                self.best_metric = val_metric
                self.best_epoch = self.epoch
                best_payload = self.state_payload(val_metric)
                if self.out_dir is not None:
                    self.checkpoints.save(best_payload, self.out_dir / "best.pt")
                self.run_logger.log(
                    LogCategory.CHECKPOINT,
                    LogLevel.SUCCESS,
                    f"New best epoch {self.epoch}",
                    {"val_perceptual": val_metric},
                )
            if self.out_dir is not None:
                self.checkpoints.save(self.state_payload(val_metric), self.out_dir / "last.pt")

        if best_payload is None:
            # resumed run without improvement: fall back to the stored best file or current state
            best_path = self.out_dir / "best.pt" if self.out_dir is not None else None
            if best_path is not None and best_path.exists():
                best_payload = self.checkpoints.load(best_path, map_location=self.device)
            else:
                best_payload = self.state_payload(self.val_history[-1] if self.val_history else None)

        self.run_logger.write_summary(
            {
                "best_epoch": self.best_epoch,
                "best_val_perceptual": self.best_metric,
                "epochs": self.epoch,
                "val_epochs": self.val_epochs,
                "val_perceptual": self.val_history,
                "stats": self.stats,
                "extractor_source": self.extractor.source,
            }
        )
        self.run_logger.log(
            LogCategory.TRAIN,
            LogLevel.SUCCESS,
            "Training finished",
            {"best_epoch": self.best_epoch, "best_val_perceptual": self.best_metric},
        )
        return best_payload
