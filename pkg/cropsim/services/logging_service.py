"""
cropsim/services/logging_service.py
Run log: category/level tagged events mirrored to the Python logger, with counters,
per-epoch training CSV and a JSON run summary
"""

import json
import logging
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any

import pandas as pd

logger = logging.getLogger(__name__)

TRAIN_LOG_COLUMNS = ["epoch", "loss_D", "loss_G", "GP", "val_perceptual"]


class LogLevel(Enum):
    """Python logging level and marker"""

    INFO = (logging.INFO, "ℹ️")
    SUCCESS = (logging.INFO, "✅")
    WARNING = (logging.WARNING, "⚠️")
    ERROR = (logging.ERROR, "❌")


class LogCategory(Enum):
    """Categories for run events"""

    TRAIN = "Training"
    VALIDATION = "Validation"
    CHECKPOINT = "Checkpoint"
    SWEEP = "Sweep"
    DATA = "Data"
    EVAL = "Evaluation"


class RunLogger:
    def __init__(self, out_dir: str | Path | None = None, train_log_name: str = "train_log.csv"):
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.train_log_path = self.out_dir / train_log_name if self.out_dir is not None else None
        self.epoch_rows: list[dict[str, Any]] = []

        # Statistics tracking
        self.stats: dict[str, Any] = {
            "events": 0,
            "events_by_level": {level.name: 0 for level in LogLevel},
            "events_by_category": {},
            "start_time": datetime.utcnow(),
        }

    def log(
        self,
        category: LogCategory,
        level: LogLevel,
        message: str,
        fields: dict[str, Any] | None = None,
    ) -> None:
        py_level, marker = level.value
        text = f"{marker} [{category.value}] {message}"
        if fields:
            text += " | " + ", ".join(f"{k}={_fmt(v)}" for k, v in fields.items())
        logger.log(py_level, text)

        self.stats["events"] += 1
        self.stats["events_by_level"][level.name] += 1
        by_category = self.stats["events_by_category"]
        by_category[category.name] = by_category.get(category.name, 0) + 1

    def log_epoch(
        self,
        epoch: int,
        loss_d: float,
        loss_g: float,
        gp: float,
        val_perceptual: float | None,
    ) -> None:
        """Record one epoch row and rewrite the training CSV."""
        row = {
            "epoch": epoch,
            "loss_D": loss_d,
            "loss_G": loss_g,
            "GP": gp,
            "val_perceptual": val_perceptual,
        }
        self.epoch_rows.append(row)
        self.log(
            LogCategory.TRAIN,
            LogLevel.INFO,
            f"Epoch {epoch} finished",
            {k: v for k, v in row.items() if k != "epoch"},
        )
        if self.train_log_path is not None:
            self.train_log_path.parent.mkdir(parents=True, exist_ok=True)
            pd.DataFrame(self.epoch_rows, columns=TRAIN_LOG_COLUMNS).to_csv(
                self.train_log_path, index=False
            )

    def restore_epochs(self, rows: list[dict[str, Any]]) -> None:
        self.epoch_rows = [dict(r) for r in rows]

    def write_summary(self, summary: dict[str, Any], name: str = "summary.json") -> Path | None:
        if self.out_dir is None:
            return None
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = dict(summary)
        payload["log_stats"] = {
            "events": self.stats["events"],
            "events_by_level": self.stats["events_by_level"],
            "events_by_category": self.stats["events_by_category"],
            "elapsed_s": (datetime.utcnow() - self.stats["start_time"]).total_seconds(),
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, default=str)
        return path


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.5f}"
    return str(value)
