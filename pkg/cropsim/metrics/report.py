"""
cropsim/metrics/report.py
Delta-t bucketed metric reports (T0 identity, ST short-term, LT long-term)
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from cropsim.metrics.image_quality import fid as frechet_distance

logger = logging.getLogger(__name__)

BUCKETS = ("T0", "ST", "LT")
PAIR_COLUMNS = ["sequence_id", "t_in", "t_gen", "delta_t", "bucket", "ms_ssim", "perceptual"]


def bucket_of(delta_t: int) -> str:
    gap = abs(int(delta_t))
    if gap == 0:
        return "T0"
    if gap <= 10:
        return "ST"
    return "LT"


@dataclass
class PairRecord:
    sequence_id: str
    t_in: int
    t_gen: int
    ms_ssim: float
    perceptual: float

    @property
    def delta_t(self) -> int:
        return self.t_gen - self.t_in

    @property
    def bucket(self) -> str:
        return bucket_of(self.delta_t)

    def to_dict(self) -> dict:
        return {
            "sequence_id": self.sequence_id,
            "t_in": self.t_in,
            "t_gen": self.t_gen,
            "delta_t": self.delta_t,
            "bucket": self.bucket,
            "ms_ssim": self.ms_ssim,
            "perceptual": self.perceptual,
        }

    @classmethod
    def from_row(cls, row: dict) -> "PairRecord":
        return cls(
            sequence_id=str(row["sequence_id"]),
            t_in=int(row["t_in"]),
            t_gen=int(row["t_gen"]),
            ms_ssim=float(row["ms_ssim"]),
            perceptual=float(row["perceptual"]),
        )


class IncomparableReportsError(ValueError):
    pass


@dataclass
class MetricReport:
    records: list[PairRecord]
    ms_ssim: dict[str, float]  # bucket -> mean, plus "mean"; empty buckets are absent
    perceptual: dict[str, float]
    fid: float | None
    extractor_source: str
    counts: dict[str, int] = field(default_factory=dict)
    trait_errors: dict[str, dict] = field(default_factory=dict)
    real_trait_errors: dict[str, dict] = field(default_factory=dict)
    gen_truth_trait_errors: dict[str, dict] = field(default_factory=dict)
    # trait -> generated MAE / real-image MAE, both against ground truth
    truth_mae_ratio: dict[str, float] = field(default_factory=dict)

    def assert_comparable(self, other: "MetricReport") -> None:
        """Numbers from different feature extractors must never be compared."""
        if self.extractor_source != other.extractor_source:
            raise IncomparableReportsError(
                f"reports use different feature extractors: "
                f"{self.extractor_source!r} vs {other.extractor_source!r}"
            )

    def to_dict(self) -> dict:
        return {
            "extractor_source": self.extractor_source,
            "n_pairs": len(self.records),
            "counts": self.counts,
            "ms_ssim": self.ms_ssim,
            "perceptual": self.perceptual,
            "fid": self.fid,
            "trait_errors": self.trait_errors,
            "real_trait_errors": self.real_trait_errors,
            "gen_truth_trait_errors": self.gen_truth_trait_errors,
            "truth_mae_ratio": self.truth_mae_ratio,
        }

    def write_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
        return path

    def write_pairs_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame([r.to_dict() for r in self.records], columns=PAIR_COLUMNS)
        frame.to_csv(path, index=False)
        return path

    @classmethod
    def read(cls, json_path: str | Path, csv_path: str | Path | None = None) -> "MetricReport":
        with open(json_path, encoding="utf-8") as f:
            data = json.load(f)
        records = []
        if csv_path is not None and Path(csv_path).exists():
            records = [PairRecord.from_row(row) for row in pd.read_csv(csv_path).to_dict("records")]
        return cls(
            records=records,
            ms_ssim=data["ms_ssim"],
            perceptual=data["perceptual"],
            fid=data.get("fid"),
            extractor_source=data["extractor_source"],
            counts=data.get("counts", {}),
            trait_errors=data.get("trait_errors", {}),
            real_trait_errors=data.get("real_trait_errors", {}),
            gen_truth_trait_errors=data.get("gen_truth_trait_errors", {}),
            truth_mae_ratio=data.get("truth_mae_ratio", {}),
        )


def _bucket_means(records: list[PairRecord], attr: str) -> dict[str, float]:
    out = {}
    for bucket in BUCKETS:
        values = [getattr(r, attr) for r in records if r.bucket == bucket]
        if values:
            out[bucket] = float(np.mean(values))
    if records:
        out["mean"] = float(np.mean([getattr(r, attr) for r in records]))
    return out


def bucket_report(
    records: list[PairRecord],
    *,
    extractor_source: str,
    features_gen: np.ndarray | None = None,
    features_ref: np.ndarray | None = None,
) -> MetricReport:
    """Aggregate per-pair metrics by bucket; FID once over all generated vs reference features."""
    fid_value = None
    if features_gen is not None and features_ref is not None:
        if len(features_gen) >= 2 and len(features_ref) >= 2:
            fid_value = frechet_distance(features_ref, features_gen)
        else:
            logger.warning("FID skipped: fewer than 2 images per set")
    for r in records:
        if not (math.isfinite(r.ms_ssim) and math.isfinite(r.perceptual)):
            logger.warning(f"Non-finite metric for {r.sequence_id} t={r.t_in}->{r.t_gen}")
    counts = {b: sum(1 for r in records if r.bucket == b) for b in BUCKETS}
    return MetricReport(
        records=list(records),
        ms_ssim=_bucket_means(records, "ms_ssim"),
        perceptual=_bucket_means(records, "perceptual"),
        fid=fid_value,
        extractor_source=extractor_source,
        counts={b: n for b, n in counts.items() if n},
    )
