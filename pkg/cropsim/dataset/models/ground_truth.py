# cropsim/dataset/models/ground_truth.py
from dataclasses import dataclass


@dataclass
class GroundTruthRow:
    sequence_id: str
    time: int
    pla_px: int  # center plant pixels
    masks: str  # RLE JSON path relative to the sidecar
    bm_sw: float
    bm_fb: float
    cover_px: int = 0  # all plant pixels in the image

    def to_dict(self) -> dict:
        return {
            "sequence_id": self.sequence_id,
            "time": self.time,
            "pla_px": self.pla_px,
            "masks": self.masks,
            "bm_sw": self.bm_sw,
            "bm_fb": self.bm_fb,
            "cover_px": self.cover_px,
        }

    @classmethod
    def from_row(cls, row: dict) -> "GroundTruthRow":
        return cls(
            sequence_id=str(row["sequence_id"]),
            time=int(row["time"]),
            pla_px=int(row["pla_px"]),
            masks=str(row["masks"]),
            bm_sw=float(row["bm_sw"]),
            bm_fb=float(row["bm_fb"]),
            cover_px=int(row.get("cover_px", 0)),
        )
