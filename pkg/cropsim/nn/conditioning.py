"""
cropsim/nn/conditioning.py
Condition embeddings (generator side and critic side) and conditional batch normalization
"""

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from cropsim.dataset.models import ConditionSet
from cropsim.utils.config import CONDITION_TYPES, normalize_conditions


@dataclass
class ConditionBatch:
    t: torch.Tensor  # N, long
    c: torch.Tensor | None = None  # N, long
    b: torch.Tensor | None = None  # N x 2, raw t/ha

    def __len__(self) -> int:
        return self.t.shape[0]

    @classmethod
    def from_sets(
        cls,
        sets: list[ConditionSet],
        conditions: tuple[str, ...],
        device: torch.device | str = "cpu",
        dtype: torch.dtype = torch.float32,
    ) -> "ConditionBatch":
        if not sets:
            raise ValueError("empty condition batch")
        c = b = None
        if "c" in conditions:
            if any(y.c is None for y in sets):
                raise ValueError("treatment conditioning is active but a condition set has no c")
            c = torch.tensor([y.c for y in sets], dtype=torch.long, device=device)
        if "b" in conditions:
            if any(y.b is None for y in sets):
                raise ValueError("biomass conditioning is active but a condition set has no b")
            b = torch.tensor([list(y.b) for y in sets], dtype=dtype, device=device)
        t = torch.tensor([y.t for y in sets], dtype=torch.long, device=device)
        return cls(t=t, c=c, b=b)


def sinusoidal_encoding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sinusoidal encoding of integer days; defined for any integer, no clamping."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(max_period) * torch.arange(half, dtype=torch.float64, device=t.device) / max(half, 1)
    )
    args = t.to(torch.float64)[:, None] * freqs[None, :]
    enc = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        enc = torch.cat([enc, torch.zeros_like(enc[:, :1])], dim=-1)
    return enc


class TimeEmbedding(nn.Module):
    def __init__(self, dim: int, max_period: float = 10000.0):
        super().__init__()
        self.dim = dim
        self.max_period = max_period
        self.mlp = nn.Sequential(nn.Linear(dim, dim), nn.SiLU(), nn.Linear(dim, dim))

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        enc = sinusoidal_encoding(t, self.dim, self.max_period)
        return self.mlp(enc.to(self.mlp[0].weight.dtype))


class TreatmentEmbedding(nn.Module):
    def __init__(self, n_treatments: int, dim: int):
        super().__init__()
        self.n_treatments = n_treatments
        self.table = nn.Embedding(n_treatments, dim)

    def forward(self, c: torch.Tensor) -> torch.Tensor:
        if c.numel() and (int(c.min()) < 0 or int(c.max()) >= self.n_treatments):
            raise ValueError(
                f"treatment index out of vocabulary [0, {self.n_treatments}): {c.tolist()}"
            )
        return self.table(c)


class BiomassEmbedding(nn.Module):
    """z-scores (SW, FB) with training-set statistics, then a 2 -> d -> d perceptron."""

    def __init__(self, dim: int):
        super().__init__()
        self.mlp = nn.Sequential(nn.Linear(2, dim), nn.SiLU(), nn.Linear(dim, dim))
        self.register_buffer("bm_mean", torch.zeros(2))
        self.register_buffer("bm_std", torch.ones(2))

    def set_stats(self, mean: list[float], std: list[float]) -> None:
        self.bm_mean.copy_(torch.as_tensor(mean, dtype=self.bm_mean.dtype))
        self.bm_std.copy_(torch.as_tensor(std, dtype=self.bm_std.dtype).clamp_min(1e-8))

    def forward(self, b: torch.Tensor) -> torch.Tensor:
        if b.ndim != 2 or b.shape[1] != 2:
            raise ValueError(f"biomass condition must be N x 2, got {tuple(b.shape)}")
        z = (b.to(self.bm_mean.dtype) - self.bm_mean) / self.bm_std
        return self.mlp(z.to(self.mlp[0].weight.dtype))


class ConditionEmbedding(nn.Module):
    """One embedding per active condition type, concatenated as [t, c, b]."""

    def __init__(self, conditions: tuple[str, ...], dim: int, n_treatments: int):
        super().__init__()
        self.conditions = normalize_conditions(conditions)
        self.dim = dim
        self.embeddings = nn.ModuleDict()
        if "t" in self.conditions:
            self.embeddings["t"] = TimeEmbedding(dim)
        if "c" in self.conditions:
            self.embeddings["c"] = TreatmentEmbedding(n_treatments, dim)
        if "b" in self.conditions:
            self.embeddings["b"] = BiomassEmbedding(dim)

    @property
    def out_dim(self) -> int:
        return self.dim * len(self.conditions)

    def set_biomass_stats(self, mean: list[float], std: list[float]) -> None:
        if "b" in self.embeddings:
            self.embeddings["b"].set_stats(mean, std)

    def per_type(self, y: ConditionBatch) -> list[torch.Tensor]:
        out = []
        for name in CONDITION_TYPES:
            if name not in self.conditions:
                continue
            value = getattr(y, name)
            if value is None:
                raise ValueError(f"condition {name!r} is active but missing from the batch")
            out.append(self.embeddings[name](value))
        return out

    def forward(self, y: ConditionBatch) -> torch.Tensor:
        return torch.cat(self.per_type(y), dim=1)


def embed_critic(
    psi: ConditionEmbedding, y_in: ConditionBatch, y_gen: ConditionBatch, size: int
) -> torch.Tensor:
    """2k single-channel size x size maps (input side first, row-major reshape)."""
    if psi.dim != size * size:
        raise ValueError(f"critic embedding dim {psi.dim} does not match fusion size {size}x{size}")
    vectors = psi.per_type(y_in) + psi.per_type(y_gen)
    return torch.stack([v.reshape(v.shape[0], size, size) for v in vectors], dim=1)


class ConditionalBatchNorm2d(nn.Module):
    """BatchNorm2d without affine parameters; gamma/beta are linear maps of the aux vector."""

    def __init__(self, num_features: int, cond_dim: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.num_features = num_features
        self.bn = nn.BatchNorm2d(num_features, affine=False, eps=eps, momentum=momentum)
        self.gamma = nn.Linear(cond_dim, num_features)
        self.beta = nn.Linear(cond_dim, num_features)
        nn.init.zeros_(self.gamma.weight)
        nn.init.ones_(self.gamma.bias)
        nn.init.zeros_(self.beta.weight)
        nn.init.zeros_(self.beta.bias)

    def forward(self, x: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.num_features:
            raise ValueError(f"CBN expects {self.num_features} channels, got {x.shape[1]}")
        x = self.bn(x)
        gamma = self.gamma(a).view(-1, self.num_features, 1, 1)
        beta = self.beta(a).view(-1, self.num_features, 1, 1)
        return gamma * x + beta
