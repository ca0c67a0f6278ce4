# cropsim/services/render_service.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import torch
from PIL import Image, ImageDraw, ImageFont

from cropsim.utils.image_io import to_pil

logger = logging.getLogger(__name__)

_DEFAULT_FONT = ImageFont.load_default()

BACKGROUND = (255, 255, 255)
TEXT_COLOR = (30, 30, 30)
BORDER_COLORS = {
    "input": (0, 190, 230),  # cyan
    "ood": (245, 130, 20),  # orange
}


@dataclass
class GridCell:
    image: torch.Tensor | Image.Image | None
    border: str | None = None  # "input" | "ood" | None
    caption: str = ""


def std_image(std: torch.Tensor) -> torch.Tensor:
    """Std map (H x W) overdrawn by four, clipped, as a grey 3 x H x W image in [-1, 1]."""
    scaled = (std.to(torch.float32) * 4.0).clamp(0.0, 1.0)
    return (scaled * 2.0 - 1.0)[None].expand(3, *scaled.shape)


def _as_pil(image: torch.Tensor | Image.Image) -> Image.Image:
    return image if isinstance(image, Image.Image) else to_pil(image)


def render_grid(
    rows: list[list[GridCell]],
    path: str | Path,
    *,
    row_labels: list[str] | None = None,
    column_labels: list[str] | None = None,
    border: int = 3,
    pad: int = 4,
) -> Path:
    """
    Render a row-wise PNG grid (e.g. reference / generated / variability rows, one column
    per time). Empty cells stay blank; input frames and OOD frames get a coloured border.
    """
    if not rows or not any(rows):
        raise ValueError("cannot render an empty grid")
    n_cols = max(len(r) for r in rows)
    sizes = [_as_pil(c.image).size for r in rows for c in r if c.image is not None]
    cell_w, cell_h = sizes[0] if sizes else (64, 64)
    label_w = 90 if row_labels else 0
    header_h = 16 if column_labels else 0
    caption_h = 14 if any(c.caption for r in rows for c in r) else 0
    step_w = cell_w + 2 * border + pad
    step_h = cell_h + 2 * border + pad + caption_h

    width = label_w + n_cols * step_w + pad
    height = header_h + len(rows) * step_h + pad
    canvas = Image.new("RGB", (width, height), BACKGROUND)
    draw = ImageDraw.Draw(canvas)

    for j, label in enumerate(column_labels or []):
        draw.text((label_w + j * step_w + pad, 2), label, font=_DEFAULT_FONT, fill=TEXT_COLOR)

    for i, row in enumerate(rows):
        y0 = header_h + i * step_h + pad
        if row_labels and i < len(row_labels):
            draw.text((4, y0 + cell_h // 2), row_labels[i], font=_DEFAULT_FONT, fill=TEXT_COLOR)
        for j, cell in enumerate(row):
            if cell.image is None:
                continue
            x0 = label_w + j * step_w + pad
            color = BORDER_COLORS.get(cell.border or "")
            if color is not None:
                draw.rectangle(
                    (x0, y0, x0 + cell_w + 2 * border - 1, y0 + cell_h + 2 * border - 1), fill=color
                )
            img = _as_pil(cell.image)
            if img.size != (cell_w, cell_h):
                img = img.resize((cell_w, cell_h), Image.Resampling.NEAREST)
            canvas.paste(img, (x0 + border, y0 + border))
            if cell.caption:
                draw.text(
                    (x0, y0 + cell_h + 2 * border + 1), cell.caption, font=_DEFAULT_FONT, fill=TEXT_COLOR
                )

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    canvas.save(path, format="PNG")
    logger.debug(f"Grid written: {path} ({len(rows)}x{n_cols})")
    return path
