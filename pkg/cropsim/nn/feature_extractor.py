"""
cropsim/nn/feature_extractor.py
Fixed image feature networks with named layer taps for perceptual distance and FID
"""

import logging
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

logger = logging.getLogger(__name__)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
VGG16_TAPS = {3: "relu1_2", 8: "relu2_2", 15: "relu3_3", 22: "relu4_3", 29: "relu5_3"}


class FeatureExtractor(nn.Module):
    """Frozen network; forward returns one activation map per tap."""

    source: str = ""
    tap_names: list[str]

    def taps(self, x: torch.Tensor) -> list[torch.Tensor]:
        return self(x)

    @torch.no_grad()
    def embed(self, x: torch.Tensor) -> torch.Tensor:
        """Per-image vector: spatial means of every tap, concatenated."""
        return torch.cat([f.mean(dim=(2, 3)) for f in self(x)], dim=1)

    def freeze(self) -> "FeatureExtractor":
        self.eval()
        for p in self.parameters():
            p.requires_grad_(False)
        return self


class SeededConvExtractor(FeatureExtractor):
    """Five conv stages with weights drawn from a fixed seed; taps after each stage."""

    def __init__(self, seed: int = 0, widths: tuple[int, ...] = (32, 64, 96, 128, 160)):
        super().__init__()
        self.source = f"seeded-random:{seed}"
        self.tap_names = [f"stage{i + 1}" for i in range(len(widths))]
        g = torch.Generator().manual_seed(seed)
        self.convs = nn.ModuleList()
        in_ch = 3
        for out_ch in widths:
            conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)
            fan_in = in_ch * 9
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=g) * math.sqrt(2.0 / fan_in))
                conv.bias.zero_()
            self.convs.append(conv)
            in_ch = out_ch
        self.freeze()

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        h = x.to(self.convs[0].weight.dtype)
        for i, conv in enumerate(self.convs):
            if i > 0:
                h = F.avg_pool2d(h, 2) if min(h.shape[-2:]) >= 2 else h
            h = F.relu(conv(h))
            feats.append(h)
        return feats


class VGG16Extractor(FeatureExtractor):
    """ImageNet VGG16 conv trunk; taps at relu1_2 .. relu5_3."""

    def __init__(self):
        super().__init__()
        from torchvision.models import VGG16_Weights, vgg16

        self.source = "pretrained:vgg16-imagenet1k-v1"
        self.tap_names = list(VGG16_TAPS.values())
        self.features = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features[: max(VGG16_TAPS) + 1]
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))
        self.freeze()

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        h = ((x.to(self.mean.dtype) + 1.0) / 2.0 - self.mean) / self.std
        feats = []
        for idx, layer in enumerate(self.features):
            h = layer(h)
            if idx in VGG16_TAPS:
                feats.append(h)
        return feats


def build_extractor(kind: str = "seeded", seed: int = 0) -> FeatureExtractor:
    if kind == "seeded":
        return SeededConvExtractor(seed)
    if kind == "vgg16":
        logger.info("Loading pretrained VGG16 feature extractor")
        return VGG16Extractor()
    raise ValueError(f"unknown feature extractor {kind!r}")
