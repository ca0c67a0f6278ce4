"""
cropsim/traits/models.py
Instance masks (RLE JSON interchange) and per-image trait estimates
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from pycocotools import mask as mask_utils


def encode_mask(mask: np.ndarray) -> dict:
    rle = mask_utils.encode(np.asfortranarray(mask.astype(np.uint8)))
    return {"size": [int(s) for s in rle["size"]], "counts": rle["counts"].decode("ascii")}


def decode_mask(rle: dict) -> np.ndarray:
    coded = {"size": list(rle["size"]), "counts": rle["counts"].encode("ascii")}
    return mask_utils.decode(coded).astype(bool)


@dataclass
class InstanceMasks:
    masks: np.ndarray  # K x H x W bool
    scores: np.ndarray  # K
    labels: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.masks = np.asarray(self.masks, dtype=bool)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if self.masks.ndim != 3:
            raise ValueError(f"masks must be K x H x W, got shape {self.masks.shape}")
        if len(self.scores) != len(self.masks):
            raise ValueError(f"{len(self.masks)} masks but {len(self.scores)} scores")
        if np.any(self.scores < 0) or np.any(self.scores > 1):
            raise ValueError("scores must lie in [0, 1]")
        if self.labels and len(self.labels) != len(self.masks):
            raise ValueError("labels must match the number of masks")

    @classmethod
    def empty(cls, height: int, width: int) -> "InstanceMasks":
        return cls(masks=np.zeros((0, height, width), dtype=bool), scores=np.zeros(0))

    def __len__(self) -> int:
        return len(self.masks)

    @property
    def height(self) -> int:
        return self.masks.shape[1]

    @property
    def width(self) -> int:
        return self.masks.shape[2]

    @property
    def boxes(self) -> np.ndarray:
        """K x 4 boxes as [x, y, w, h]."""
        if len(self) == 0:
            return np.zeros((0, 4))
        return np.asarray(mask_utils.toBbox(self.rles()), dtype=np.float64).reshape(-1, 4)

    def rles(self) -> list[dict]:
        return [mask_utils.encode(np.asfortranarray(m.astype(np.uint8))) for m in self.masks]

    def to_json(self) -> dict:
        instances = []
        boxes = self.boxes
        for i, m in enumerate(self.masks):
            instances.append(
                {
                    "rle": encode_mask(m),
                    "score": float(self.scores[i]),
                    "label": self.labels[i] if self.labels else None,
                    "bbox": [float(v) for v in boxes[i]],
                }
            )
        return {"height": self.height, "width": self.width, "instances": instances}

    @classmethod
    def from_json(cls, data: dict) -> "InstanceMasks":
        height, width = int(data["height"]), int(data["width"])
        instances = data.get("instances", [])
        if not instances:
            return cls.empty(height, width)
        masks = np.stack([decode_mask(inst["rle"]) for inst in instances])
        labels = [inst.get("label") or "" for inst in instances]
        return cls(
            masks=masks,
            scores=np.array([inst["score"] for inst in instances]),
            labels=labels if any(labels) else [],
        )


def write_masks_json(masks: InstanceMasks, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(masks.to_json(), f)
    return path


def read_masks_json(path: str | Path) -> InstanceMasks:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Mask file not found: {path}")
    with open(path, encoding="utf-8") as f:
        return InstanceMasks.from_json(json.load(f))


@dataclass
class TraitEstimate:
    kind: str  # PLA | BM
    pixel_count: int = 0
    pla_mm2: float = 0.0
    pla_pct: float = 0.0
    gsd_mm: float | None = None
    bm_sw: float = 0.0
    bm_fb: float = 0.0
    flags: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.kind not in ("PLA", "BM"):
            raise ValueError(f"kind must be PLA or BM, got {self.kind!r}")
        if self.pla_mm2 < 0 or not 0.0 <= self.pla_pct <= 100.0:
            raise ValueError("PLA must be >= 0 and normalized PLA within [0, 100]")
        if self.bm_sw < 0 or self.bm_fb < 0:
            raise ValueError("biomass components must be >= 0")

    @property
    def bm_total(self) -> float:
        return self.bm_sw + self.bm_fb

    def value(self, key: str) -> float:
        """Scalar trait by name: pla_pct, pla_mm2, bm_sw, bm_fb, bm_total."""
        return float(getattr(self, key))

    def to_dict(self, image_id: str = "") -> dict:
        return {
            "image_id": image_id,
            "kind": self.kind,
            "pla_px": self.pixel_count,
            "pla_mm2": self.pla_mm2,
            "pla_pct": self.pla_pct,
            "gsd_mm": self.gsd_mm,
            "bm_sw": self.bm_sw,
            "bm_fb": self.bm_fb,
            "flags": ";".join(self.flags),
        }


def write_traits_csv(estimates: list[tuple[str, TraitEstimate]], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame([est.to_dict(image_id) for image_id, est in estimates]).to_csv(path, index=False)
    return path
