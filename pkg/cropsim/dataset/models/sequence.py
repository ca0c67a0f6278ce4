"""
cropsim/dataset/models/sequence.py
Manifest rows and per-sequence records
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

SPLITS = ("train", "val", "test")


@dataclass
class ManifestRow:
    sequence_id: str
    time: int  # days after sowing
    image: str  # relative to the manifest directory
    treatment: int
    split: str
    bm_sw: float | None = None  # t/ha
    bm_fb: float | None = None  # t/ha

    def to_dict(self) -> dict:
        """Convert row to a manifest JSON object"""
        return {
            "sequence_id": self.sequence_id,
            "time": self.time,
            "image": self.image,
            "treatment": self.treatment,
            "bm_sw": self.bm_sw,
            "bm_fb": self.bm_fb,
            "split": self.split,
        }

    @classmethod
    def from_row(cls, row: dict[str, Any]) -> "ManifestRow":
        """Create ManifestRow from a decoded JSON line; raises KeyError/TypeError/ValueError"""
        if not isinstance(row, dict):
            raise TypeError(f"expected a JSON object, got {type(row).__name__}")
        time = row["time"]
        treatment = row["treatment"]
        if isinstance(time, bool) or not isinstance(time, int):
            raise TypeError(f"time must be an integer, got {time!r}")
        if isinstance(treatment, bool) or not isinstance(treatment, int) or treatment < 0:
            raise ValueError(f"treatment must be a non-negative integer, got {treatment!r}")
        split = row["split"]
        if split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
        bm_sw = row.get("bm_sw")
        bm_fb = row.get("bm_fb")
        for name, value in (("bm_sw", bm_sw), ("bm_fb", bm_fb)):
            if value is not None and (not isinstance(value, (int, float)) or value < 0):
                raise ValueError(f"{name} must be a non-negative number or null, got {value!r}")
        return cls(
            sequence_id=str(row["sequence_id"]),
            time=time,
            image=str(row["image"]),
            treatment=treatment,
            split=split,
            bm_sw=None if bm_sw is None else float(bm_sw),
            bm_fb=None if bm_fb is None else float(bm_fb),
        )


@dataclass
class SequenceRecord:
    """All images of one plot position over the season; images are sorted by time."""

    sequence_id: str
    images: list[tuple[int, str]]
    treatment_id: int
    biomass_by_time: dict[int, tuple[float, float]]
    split: str
    root: Path | None = field(default=None, compare=False, repr=False)

    @property
    def times(self) -> list[int]:
        return [t for t, _ in self.images]

    def has_biomass(self) -> bool:
        return all(t in self.biomass_by_time for t in self.times)

    def image_path(self, time: int) -> Path:
        for t, rel in self.images:
            if t == time:
                return (self.root / rel) if self.root is not None else Path(rel)
        raise KeyError(f"{self.sequence_id} has no image at t={time}")

    def biomass(self, time: int) -> tuple[float, float] | None:
        return self.biomass_by_time.get(time)

    def to_rows(self) -> list[ManifestRow]:
        rows = []
        for t, rel in self.images:
            bm = self.biomass_by_time.get(t)
            rows.append(
                ManifestRow(
                    sequence_id=self.sequence_id,
                    time=t,
                    image=rel,
                    treatment=self.treatment_id,
                    split=self.split,
                    bm_sw=None if bm is None else bm[0],
                    bm_fb=None if bm is None else bm[1],
                )
            )
        return rows
