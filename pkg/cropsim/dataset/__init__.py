"""
cropsim/dataset/__init__.py
Manifest ingestion, pair sampling, augmentation and the synthetic plot generator
"""

from pathlib import Path

from cropsim.dataset.models import GroundTruthRow, SequenceRecord
from cropsim.dataset.queries import GroundTruthQueries, ManifestError, ManifestQueries


def load_manifest(path: str | Path, *, require_biomass: bool = False) -> list[SequenceRecord]:
    return ManifestQueries.load(path, require_biomass=require_biomass)


def write_manifest(records: list[SequenceRecord], path: str | Path) -> Path:
    return ManifestQueries.write(records, path)


def load_ground_truth(path: str | Path) -> dict[tuple[str, int], GroundTruthRow]:
    return GroundTruthQueries.load(path)


def write_ground_truth(rows: list[GroundTruthRow], path: str | Path) -> Path:
    return GroundTruthQueries.write(rows, path)


__all__ = [
    "ManifestError",
    "load_manifest",
    "write_manifest",
    "load_ground_truth",
    "write_ground_truth",
]
