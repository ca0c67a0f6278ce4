# cropsim/dataset/queries/ground_truth_queries.py
from __future__ import annotations

import json
from pathlib import Path

from cropsim.dataset.models import GroundTruthRow, Treatment


class GroundTruthQueries:
    @staticmethod
    def load(path: str | Path) -> dict[tuple[str, int], GroundTruthRow]:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Ground-truth sidecar not found: {path}")
        rows: dict[tuple[str, int], GroundTruthRow] = {}
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    row = GroundTruthRow.from_row(json.loads(line))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                    raise ValueError(f"{path}:{lineno}: malformed ground-truth record ({e})") from e
                rows[(row.sequence_id, row.time)] = row
        return rows

    @staticmethod
    def write(rows: list[GroundTruthRow], path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for row in rows:
                f.write(json.dumps(row.to_dict()) + "\n")
        return path

    @staticmethod
    def load_treatments(path: str | Path) -> list[Treatment]:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Treatment vocabulary not found: {path}")
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        vocab = sorted((Treatment.from_row(row) for row in data["treatments"]), key=lambda t: t.id)
        if [t.id for t in vocab] != list(range(len(vocab))):
            raise ValueError(f"{path}: treatment ids must be 0..T-1")
        return vocab

    @staticmethod
    def write_treatments(vocab: list[Treatment], path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"treatments": [t.to_dict() for t in vocab]}, f, indent=2)
        return path
