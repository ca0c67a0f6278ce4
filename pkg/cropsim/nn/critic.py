"""
cropsim/nn/critic.py
Wasserstein critic: (candidate, input) pair plus condition maps fused mid-network
"""

import torch
import torch.nn as nn

from cropsim.nn.conditioning import ConditionBatch, ConditionEmbedding, embed_critic
from cropsim.utils.config import ModelConfig


def critic_block(in_channels: int, out_channels: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, 3, stride=2, padding=1),
        nn.InstanceNorm2d(out_channels, affine=True),
        nn.LeakyReLU(0.2),
    )


class Critic(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        ch = config.critic_channels
        self.fusion_size = config.fusion_size
        self.psi = ConditionEmbedding(
            config.conditions, config.critic_embed_dim, config.n_treatments
        )
        self.head = nn.Sequential(nn.Conv2d(6, ch, 3, stride=1, padding=1), nn.LeakyReLU(0.2))
        widths = [ch, 2 * ch, 4 * ch, 8 * ch, 8 * ch]
        # four stride-2 blocks: H -> H/16
        self.pre_fusion = nn.Sequential(*(critic_block(widths[i], widths[i + 1]) for i in range(4)))
        n_maps = 2 * len(config.conditions)
        self.post_fusion = nn.Sequential(
            nn.Conv2d(8 * ch + n_maps, 8 * ch, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(8 * ch, 8 * ch, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(8 * ch, 1, 1),
        )

    def set_biomass_stats(self, mean: list[float], std: list[float]) -> None:
        self.psi.set_biomass_stats(mean, std)

    def forward(
        self,
        x_cand: torch.Tensor,
        x_in: torch.Tensor,
        y_in: ConditionBatch,
        y_gen: ConditionBatch,
    ) -> torch.Tensor:
        if x_cand.shape != x_in.shape:
            raise ValueError(f"candidate {tuple(x_cand.shape)} and input {tuple(x_in.shape)} differ")
        h = self.pre_fusion(self.head(torch.cat([x_cand, x_in], dim=1)))
        if h.shape[-1] != self.fusion_size or h.shape[-2] != self.fusion_size:
            raise ValueError(
                f"image size {tuple(x_in.shape[-2:])} does not fuse at {self.fusion_size}x{self.fusion_size}"
            )
        maps = embed_critic(self.psi, y_in, y_gen, self.fusion_size).to(h.dtype)
        h = self.post_fusion(torch.cat([h, maps], dim=1))
        return h.mean(dim=(1, 2, 3))
