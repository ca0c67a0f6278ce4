"""
cropsim/utils/image_io.py
PNG <-> tensor conversion; tensors are CHW float in [-1, 1]
"""

from pathlib import Path

import numpy as np
import torch
from PIL import Image


def load_image(path: str | Path, size: int | None = None) -> torch.Tensor:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Image not found: {path}")
    with Image.open(path) as img:
        img = img.convert("RGB")
        if size is not None and img.size != (size, size):
            img = img.resize((size, size), Image.Resampling.BILINEAR)
        arr = np.asarray(img, dtype=np.float32) / 127.5 - 1.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def to_uint8(image: torch.Tensor) -> np.ndarray:
    """CHW [-1, 1] tensor to HWC uint8 array."""
    arr = image.detach().float().cpu().clamp(-1.0, 1.0)
    arr = ((arr + 1.0) * 127.5).round().to(torch.uint8)
    return arr.permute(1, 2, 0).numpy()


def to_pil(image: torch.Tensor) -> Image.Image:
    return Image.fromarray(to_uint8(image))
