"""
cropsim/traits/pla.py
Projected leaf area of the center plant, and the color-threshold mask provider used on synthetic plots
"""

from typing import Protocol

import numpy as np
import torch
from scipy import ndimage

from cropsim.traits.models import InstanceMasks, TraitEstimate
from cropsim.utils.image_io import to_uint8


class MaskProvider(Protocol):
    def predict(self, image: torch.Tensor) -> InstanceMasks: ...


def select_center_instance(masks: InstanceMasks) -> int | None:
    """Instance containing the center pixel (highest score wins), else the nearest centroid."""
    if len(masks) == 0:
        return None
    cy, cx = masks.height // 2, masks.width // 2
    containing = np.flatnonzero(masks.masks[:, cy, cx])
    if len(containing):
        # stable: equal scores keep the lower index
        order = np.argsort(-masks.scores[containing], kind="stable")
        return int(containing[order[0]])
    best, best_dist = None, np.inf
    for i, mask in enumerate(masks.masks):
        ys, xs = np.nonzero(mask)
        if len(ys) == 0:
            continue
        dist = float(np.hypot(ys.mean() - cy, xs.mean() - cx))
        if dist < best_dist:
            best, best_dist = i, dist
    return best


def pla_from_masks(
    masks: InstanceMasks, gsd_mm: float, image_size: tuple[int, int] | None = None
) -> TraitEstimate:
    if gsd_mm <= 0:
        raise ValueError(f"gsd must be > 0, got {gsd_mm}")
    if image_size is not None and tuple(image_size) != (masks.height, masks.width):
        raise ValueError(f"masks are {masks.height}x{masks.width}, expected {image_size}")
    index = select_center_instance(masks)
    if index is None:
        return TraitEstimate(kind="PLA", gsd_mm=gsd_mm, flags=["no-plant"])
    pixels = int(masks.masks[index].sum())
    return TraitEstimate(
        kind="PLA",
        pixel_count=pixels,
        pla_mm2=pixels * gsd_mm * gsd_mm,
        pla_pct=100.0 * pixels / (masks.height * masks.width),
        gsd_mm=gsd_mm,
    )


class ColorThresholdSegmenter:
    """Green-dominant pixels split into species by red/green ratio, then 4-connected components."""

    def __init__(self, margin: int = 15, sw_ratio: float = 0.6, min_pixels: int = 2):
        self.margin = margin
        self.sw_ratio = sw_ratio
        self.min_pixels = min_pixels

    def plant_mask(self, image: torch.Tensor) -> tuple[np.ndarray, np.ndarray]:
        rgb = to_uint8(image).astype(np.int32)
        r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
        plant = (g - r > self.margin) | ((g - b > self.margin * 4) & (g > r))
        is_sw = r > self.sw_ratio * np.maximum(g, 1)
        return plant, is_sw

    def predict(self, image: torch.Tensor) -> InstanceMasks:
        plant, is_sw = self.plant_mask(image)
        height, width = plant.shape
        masks, labels = [], []
        for species, region in (("sw", plant & is_sw), ("fb", plant & ~is_sw)):
            labelled, count = ndimage.label(region)
            for idx in range(1, count + 1):
                component = labelled == idx
                if component.sum() >= self.min_pixels:
                    masks.append(component)
                    labels.append(species)
        if not masks:
            return InstanceMasks.empty(height, width)
        return InstanceMasks(masks=np.stack(masks), scores=np.ones(len(masks)), labels=labels)
