"""
cropsim/dataset/models/conditions.py
Condition sets y = [t, c, b] and training pairs
"""

import math
from dataclasses import dataclass, replace

import torch


@dataclass(frozen=True)
class ConditionSet:
    t: int  # days
    c: int | None = None  # treatment index
    b: tuple[float, float] | None = None  # (bm_sw, bm_fb) t/ha

    def __post_init__(self) -> None:
        if self.c is not None and self.c < 0:
            raise ValueError(f"treatment index must be >= 0, got {self.c}")
        if self.b is not None:
            if len(self.b) != 2:
                raise ValueError(f"biomass condition needs exactly 2 components, got {len(self.b)}")
            if any((not math.isfinite(v)) or v < 0 for v in self.b):
                raise ValueError(f"biomass components must be finite and >= 0, got {self.b}")
            object.__setattr__(self, "b", (float(self.b[0]), float(self.b[1])))

    def restrict(self, conditions: tuple[str, ...]) -> "ConditionSet":
        """Drop condition types that are not active in a model."""
        return ConditionSet(
            t=self.t,
            c=self.c if "c" in conditions else None,
            b=self.b if "b" in conditions else None,
        )

    def scaled_biomass(self, s_sw: float, s_fb: float) -> "ConditionSet":
        """Scale b by percentages; 100:100 returns an equal condition set."""
        if self.b is None:
            raise ValueError("condition set has no biomass to scale")
        return replace(self, b=(self.b[0] * s_sw / 100.0, self.b[1] * s_fb / 100.0))

    def to_dict(self) -> dict:
        return {"t": self.t, "c": self.c, "b": list(self.b) if self.b is not None else None}

    @classmethod
    def from_row(cls, row: dict) -> "ConditionSet":
        b = row.get("b")
        return cls(t=int(row["t"]), c=row.get("c"), b=tuple(b) if b is not None else None)


@dataclass
class SamplePair:
    x_in: torch.Tensor  # C x H x W in [-1, 1]
    x_ref: torch.Tensor
    y_in: ConditionSet
    y_gen: ConditionSet
    sequence_id: str

    @property
    def delta_t(self) -> int:
        return self.y_gen.t - self.y_in.t
