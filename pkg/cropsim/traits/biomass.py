"""
cropsim/traits/biomass.py
Two-species biomass regression: residual-18 backbone with a non-negative 2-output head
"""

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
from torchvision.models import resnet18

from cropsim.dataset.models import SequenceRecord
from cropsim.dataset.sampling import ImageCache
from cropsim.traits.evaluation import regression_metrics
from cropsim.traits.models import TraitEstimate
from cropsim.utils.config import RegressorConfig

logger = logging.getLogger(__name__)


class BiomassRegressor(nn.Module):
    def __init__(self, label_mean: tuple[float, float] = (0.0, 0.0)):
        super().__init__()
        self.backbone = resnet18(weights=None)
        in_features = self.backbone.fc.in_features
        self.backbone.fc = nn.Linear(in_features, 2)
        # starts at the label mean, so a constant target is fit from the first step
        nn.init.zeros_(self.backbone.fc.weight)
        with torch.no_grad():
            self.backbone.fc.bias.copy_(torch.as_tensor(label_mean, dtype=torch.float32))
        self.relu = nn.ReLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.relu(self.backbone(x))


def biomass_estimate(x: torch.Tensor, regressor: BiomassRegressor) -> TraitEstimate:
    return biomass_estimates(x[None], regressor)[0]


@torch.no_grad()
def biomass_estimates(
    x: torch.Tensor, regressor: BiomassRegressor, batch_size: int = 64
) -> list[TraitEstimate]:
    regressor.eval()
    device = next(regressor.parameters()).device
    dtype = next(regressor.parameters()).dtype
    out = []
    for start in range(0, len(x), batch_size):
        pred = regressor(x[start : start + batch_size].to(device=device, dtype=dtype)).cpu()
        out.extend(TraitEstimate(kind="BM", bm_sw=float(p[0]), bm_fb=float(p[1])) for p in pred)
    return out


@dataclass
class RegressorHistory:
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    best_epoch: int = 0
    val_metrics: dict[str, dict[str, float]] = field(default_factory=dict)


def labelled_images(
    records: list[SequenceRecord], cache: ImageCache
) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack every image with its (SW, FB) label; missing labels are an error."""
    images, labels = [], []
    for record in records:
        for t in record.times:
            bm = record.biomass(t)
            if bm is None:
                raise ValueError(f"missing biomass label for {record.sequence_id} at t={t}")
            images.append(cache.get(record.sequence_id, t))
            labels.append(bm)
    if not images:
        raise ValueError("no labelled images for biomass regression")
    return torch.stack(images), torch.tensor(labels, dtype=torch.float32)


def _geometric_augment(x: torch.Tensor, g: torch.Generator) -> torch.Tensor:
    if float(torch.rand((), generator=g)) < 0.5:
        x = torch.flip(x, dims=[-1])
    if float(torch.rand((), generator=g)) < 0.5:
        x = torch.flip(x, dims=[-2])
    k = int(torch.randint(0, 4, (), generator=g))
    return torch.rot90(x, k, dims=(-2, -1)) if k else x


@torch.no_grad()
def _predict(regressor: BiomassRegressor, x: torch.Tensor, batch_size: int, device: str) -> torch.Tensor:
    regressor.eval()
    preds = [regressor(x[i : i + batch_size].to(device)).cpu() for i in range(0, len(x), batch_size)]
    return torch.cat(preds)


def train_biomass_regressor(
    train_x: torch.Tensor,
    train_y: torch.Tensor,
    config: RegressorConfig,
    val_x: torch.Tensor | None = None,
    val_y: torch.Tensor | None = None,
    device: str = "cpu",
) -> tuple[BiomassRegressor, RegressorHistory]:
    """MSE regression with early stopping on validation MSE; the best state is returned."""
    if len(train_x) != len(train_y):
        raise ValueError("every training image needs a label")
    if val_x is None or val_y is None:
        val_x, val_y = train_x, train_y

    torch.manual_seed(config.seed)
    label_mean = tuple(float(v) for v in train_y.mean(dim=0))
    regressor = BiomassRegressor(label_mean).to(device)
    optimizer = torch.optim.Adam(
        regressor.parameters(), lr=config.lr, weight_decay=config.weight_decay
    )
    loss_fn = nn.MSELoss()
    g = torch.Generator().manual_seed(config.seed)
    history = RegressorHistory()
    best_state = copy.deepcopy(regressor.state_dict())
    best_val = float("inf")
    stale = 0

    for epoch in range(1, config.epochs + 1):
        regressor.train()
        order = torch.randperm(len(train_x), generator=g)
        # batch-norm needs more than one sample per batch
        drop_tail = len(train_x) > config.batch_size and len(train_x) % config.batch_size == 1
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            if drop_tail and len(idx) == 1:
                continue
            x = train_x[idx]
            if config.augment:
                x = torch.stack([_geometric_augment(img, g) for img in x])
            pred = regressor(x.to(device))
            loss = loss_fn(pred, train_y[idx].to(device))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss))

        val_pred = _predict(regressor, val_x, config.batch_size, device)
        val_mse = float(((val_pred - val_y) ** 2).mean())
        history.train_mse.append(float(np.mean(losses)) if losses else float("nan"))
        history.val_mse.append(val_mse)
        logger.info(f"Regressor epoch {epoch}: train_mse={history.train_mse[-1]:.5f} val_mse={val_mse:.5f}")

        if val_mse < best_val:
            best_val, stale = val_mse, 0
            history.best_epoch = epoch
            best_state = copy.deepcopy(regressor.state_dict())
        else:
            stale += 1
            if stale >= config.patience:
                logger.info(f"Early stopping at epoch {epoch} (best epoch {history.best_epoch})")
                break

    regressor.load_state_dict(best_state)
    val_pred = _predict(regressor, val_x, config.batch_size, device).numpy()
    history.val_metrics = {
        species: regression_metrics(val_pred[:, i], val_y[:, i].numpy())
        for i, species in enumerate(("sw", "fb"))
    }
    return regressor, history
