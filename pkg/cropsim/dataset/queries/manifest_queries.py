# cropsim/dataset/queries/manifest_queries.py
from __future__ import annotations

import json
import logging
from collections import OrderedDict
from pathlib import Path

from cropsim.dataset.models import ManifestRow, SequenceRecord

logger = logging.getLogger(__name__)


class ManifestError(ValueError):
    """Malformed or inconsistent manifest content."""

    def __init__(self, message: str, *, line: int | None = None, sequence_id: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if sequence_id is not None:
            where.append(f"sequence {sequence_id!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.sequence_id = sequence_id


class ManifestQueries:
    @staticmethod
    def read_rows(path: str | Path) -> list[tuple[int, ManifestRow]]:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Manifest not found: {path}")
        rows = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    rows.append((lineno, ManifestRow.from_row(json.loads(line))))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                    raise ManifestError(f"malformed record ({e})", line=lineno) from e
        return rows

    @staticmethod
    def load(path: str | Path, *, require_biomass: bool = False) -> list[SequenceRecord]:
        """Group manifest lines into validated sequence records (images stay on disk)."""
        path = Path(path)
        grouped: OrderedDict[str, list[tuple[int, ManifestRow]]] = OrderedDict()
        for lineno, row in ManifestQueries.read_rows(path):
            grouped.setdefault(row.sequence_id, []).append((lineno, row))

        records = []
        for sequence_id, items in grouped.items():
            first = items[0][1]
            seen: dict[int, int] = {}
            biomass: dict[int, tuple[float, float]] = {}
            for lineno, row in items:
                if row.time in seen:
                    raise ManifestError(
                        f"duplicate time {row.time} (first seen on line {seen[row.time]})",
                        line=lineno,
                        sequence_id=sequence_id,
                    )
                seen[row.time] = lineno
                if row.treatment != first.treatment:
                    raise ManifestError(
                        "treatment changes within a sequence", line=lineno, sequence_id=sequence_id
                    )
                if row.split != first.split:
                    raise ManifestError(
                        "split must be assigned per sequence", line=lineno, sequence_id=sequence_id
                    )
                if row.bm_sw is not None and row.bm_fb is not None:
                    biomass[row.time] = (row.bm_sw, row.bm_fb)
                elif require_biomass:
                    raise ManifestError(
                        f"missing biomass at t={row.time}", line=lineno, sequence_id=sequence_id
                    )
            images = sorted((row.time, row.image) for _, row in items)
            records.append(
                SequenceRecord(
                    sequence_id=sequence_id,
                    images=images,
                    treatment_id=first.treatment,
                    biomass_by_time=biomass,
                    split=first.split,
                    root=path.parent,
                )
            )
        logger.info(f"Loaded {len(records)} sequences ({sum(len(r.images) for r in records)} images) from {path}")
        return records

    @staticmethod
    def write(records: list[SequenceRecord], path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for record in records:
                for row in record.to_rows():
                    f.write(json.dumps(row.to_dict()) + "\n")
        return path

    @staticmethod
    def by_split(records: list[SequenceRecord], split: str) -> list[SequenceRecord]:
        return [r for r in records if r.split == split]
