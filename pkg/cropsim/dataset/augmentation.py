"""
cropsim/dataset/augmentation.py
Paired augmentation: the same flips, rotation, translation and ShadowOut
rectangles are applied to input and reference
"""

import math

import torch
import torchvision.transforms.functional as TF
from torchvision.transforms import InterpolationMode

from cropsim.dataset.models import SamplePair
from cropsim.utils.config import AugmentConfig
from cropsim.utils.seeding import make_generator


def _uniform(g: torch.Generator, low: float, high: float) -> float:
    return low + (high - low) * float(torch.rand((), generator=g))


def _coin(g: torch.Generator, p: float) -> bool:
    # always consume one draw so the stream layout does not depend on p
    return float(torch.rand((), generator=g)) < p


def translate(image: torch.Tensor, dx: int, dy: int) -> torch.Tensor:
    """Integer shift; uncovered pixels take the per-channel image mean."""
    fill = image.mean(dim=(-2, -1)).tolist()
    return TF.affine(
        image,
        angle=0.0,
        translate=[dx, dy],
        scale=1.0,
        shear=[0.0, 0.0],
        interpolation=InterpolationMode.NEAREST,
        fill=fill,
    )


def shadow_out(
    image: torch.Tensor, box: tuple[int, int, int, int], alpha: float, fill: float
) -> torch.Tensor:
    """Blend rectangle (top, left, height, width) toward fill with opacity alpha."""
    top, left, h, w = box
    out = image.clone()
    region = out[..., top : top + h, left : left + w]
    out[..., top : top + h, left : left + w] = (1.0 - alpha) * region + alpha * fill
    return out


def _shadow_boxes(
    g: torch.Generator, height: int, width: int, config: AugmentConfig
) -> list[tuple[tuple[int, int, int, int], float]]:
    lo, hi = config.shadow_count
    count = lo + int(torch.randint(0, max(hi - lo, 0) + 1, (), generator=g))
    boxes = []
    for _ in range(count):
        area = _uniform(g, *config.shadow_area) * height * width
        aspect = math.exp(_uniform(g, math.log(0.5), math.log(2.0)))
        h = max(1, min(height, round(math.sqrt(area * aspect))))
        w = max(1, min(width, round(area / h)))
        top = int(torch.randint(0, height - h + 1, (), generator=g))
        left = int(torch.randint(0, width - w + 1, (), generator=g))
        alpha = min(max(_uniform(g, *config.shadow_alpha), 0.0), 1.0)
        boxes.append(((top, left, h, w), alpha))
    return boxes


def augment(pair: SamplePair, rng_seed: int, config: AugmentConfig) -> SamplePair:
    g = make_generator(rng_seed)
    x_in, x_ref = pair.x_in, pair.x_ref
    height, width = x_in.shape[-2:]

    if _coin(g, config.p_hflip):
        x_in, x_ref = torch.flip(x_in, dims=[-1]), torch.flip(x_ref, dims=[-1])
    if _coin(g, config.p_vflip):
        x_in, x_ref = torch.flip(x_in, dims=[-2]), torch.flip(x_ref, dims=[-2])
    if _coin(g, config.p_rot90) and height == width:
        k = 1 + int(torch.randint(0, 3, (), generator=g))
        x_in, x_ref = torch.rot90(x_in, k, dims=(-2, -1)), torch.rot90(x_ref, k, dims=(-2, -1))
    if _coin(g, config.p_translate):
        max_dx = int(config.max_translate * width)
        max_dy = int(config.max_translate * height)
        if max_dx or max_dy:
            dx = int(torch.randint(-max_dx, max_dx + 1, (), generator=g))
            dy = int(torch.randint(-max_dy, max_dy + 1, (), generator=g))
            x_in, x_ref = translate(x_in, dx, dy), translate(x_ref, dx, dy)
    if _coin(g, config.p_shadowout):
        for box, alpha in _shadow_boxes(g, height, width, config):
            x_in = shadow_out(x_in, box, alpha, config.shadow_fill)
            x_ref = shadow_out(x_ref, box, alpha, config.shadow_fill)

    if x_in is pair.x_in and x_ref is pair.x_ref:
        return pair
    return SamplePair(x_in=x_in, x_ref=x_ref, y_in=pair.y_in, y_gen=pair.y_gen, sequence_id=pair.sequence_id)
