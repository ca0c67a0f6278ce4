"""
cropsim/nn/generator.py
Encoder-decoder generator: residual-18 encoder and mirrored upsampling decoder, every norm a CBN,
plus a noise mapping network whose output is broadcast and added to the latent
"""

import torch
import torch.nn as nn

from cropsim.nn.conditioning import ConditionalBatchNorm2d, ConditionBatch, ConditionEmbedding
from cropsim.utils.config import ModelConfig


class CBNBasicBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, stride: int, cond_dim: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False)
        self.bn1 = ConditionalBatchNorm2d(out_channels, cond_dim)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, stride=1, padding=1, bias=False)
        self.bn2 = ConditionalBatchNorm2d(out_channels, cond_dim)
        self.relu = nn.ReLU()
        self.down_conv: nn.Conv2d | None = None
        self.down_bn: ConditionalBatchNorm2d | None = None
        if stride != 1 or in_channels != out_channels:
            self.down_conv = nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False)
            self.down_bn = ConditionalBatchNorm2d(out_channels, cond_dim)

    def forward(self, x: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
        identity = x
        out = self.relu(self.bn1(self.conv1(x), a))
        out = self.bn2(self.conv2(out), a)
        if self.down_conv is not None:
            identity = self.down_bn(self.down_conv(x), a)
        return self.relu(out + identity)


class Encoder(nn.Module):
    """Residual-18 layout without pooling head; 3 x H x W -> 8b x H/32 x W/32."""

    def __init__(self, base_channels: int, cond_dim: int):
        super().__init__()
        b = base_channels
        self.stem_conv = nn.Conv2d(3, b, 7, stride=2, padding=3, bias=False)
        self.stem_bn = ConditionalBatchNorm2d(b, cond_dim)
        self.relu = nn.ReLU()
        self.pool = nn.MaxPool2d(3, stride=2, padding=1)
        widths = [(b, b, 1), (b, 2 * b, 2), (2 * b, 4 * b, 2), (4 * b, 8 * b, 2)]
        self.blocks = nn.ModuleList()
        for in_ch, out_ch, stride in widths:
            self.blocks.append(CBNBasicBlock(in_ch, out_ch, stride, cond_dim))
            self.blocks.append(CBNBasicBlock(out_ch, out_ch, 1, cond_dim))

    def forward(self, x: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
        x = self.pool(self.relu(self.stem_bn(self.stem_conv(x), a)))
        for block in self.blocks:
            x = block(x, a)
        return x


class MappingNetwork(nn.Module):
    """z -> w through three linear layers of growing width."""

    def __init__(self, z_dim: int, w_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(z_dim, w_dim // 2),
            nn.LeakyReLU(0.2),
            nn.Linear(w_dim // 2, 3 * w_dim // 4),
            nn.LeakyReLU(0.2),
            nn.Linear(3 * w_dim // 4, w_dim),
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.net(z)


class UpBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, cond_dim: int):
        super().__init__()
        self.up = nn.Upsample(scale_factor=2, mode="nearest")
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1, bias=False)
        self.bn1 = ConditionalBatchNorm2d(out_channels, cond_dim)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)
        self.bn2 = ConditionalBatchNorm2d(out_channels, cond_dim)
        self.relu = nn.ReLU()

    def forward(self, x: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
        x = self.up(x)
        x = self.relu(self.bn1(self.conv1(x), a))
        return self.relu(self.bn2(self.conv2(x), a))


class Decoder(nn.Module):
    """Five nearest-neighbour x2 stages, 8b -> 4b -> 2b -> b -> b -> b/2, then RGB + tanh."""

    def __init__(self, base_channels: int, cond_dim: int):
        super().__init__()
        b = base_channels
        channels = [8 * b, 4 * b, 2 * b, b, b, max(b // 2, 1)]
        self.stages = nn.ModuleList(
            UpBlock(channels[i], channels[i + 1], cond_dim) for i in range(len(channels) - 1)
        )
        self.to_rgb = nn.Conv2d(channels[-1], 3, 3, padding=1)
        self.tanh = nn.Tanh()

    def forward(self, x: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
        for stage in self.stages:
            x = stage(x, a)
        return self.tanh(self.to_rgb(x))


class Generator(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.phi = ConditionEmbedding(config.conditions, config.embed_dim, config.n_treatments)
        cond_dim = self.phi.out_dim
        self.encoder = Encoder(config.base_channels, cond_dim)
        self.mapping = MappingNetwork(config.z_dim, config.latent_channels)
        self.decoder = Decoder(config.base_channels, cond_dim)
        self.noise_injection = config.noise_injection

    def set_biomass_stats(self, mean: list[float], std: list[float]) -> None:
        self.phi.set_biomass_stats(mean, std)

    def encode(self, x_in: torch.Tensor, y_in: ConditionBatch) -> torch.Tensor:
        height, width = x_in.shape[-2:]
        if height % 32 or width % 32:
            raise ValueError(f"input size must be divisible by 32, got {height}x{width}")
        return self.encoder(x_in, self.phi(y_in))

    def map_noise(self, z: torch.Tensor) -> torch.Tensor:
        return self.mapping(z)

    def decode(self, xi: torch.Tensor, y_gen: ConditionBatch, w: torch.Tensor) -> torch.Tensor:
        if self.noise_injection:
            xi = xi + w[:, :, None, None]
        return self.decoder(xi, self.phi(y_gen))

    def forward(
        self, x_in: torch.Tensor, y_in: ConditionBatch, y_gen: ConditionBatch, z: torch.Tensor
    ) -> torch.Tensor:
        return self.decode(self.encode(x_in, y_in), y_gen, self.map_noise(z))


def sample_noise(
    n: int,
    z_dim: int,
    generator: torch.Generator | None = None,
    device: torch.device | str = "cpu",
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    return torch.randn(n, z_dim, generator=generator, dtype=dtype).to(device)
