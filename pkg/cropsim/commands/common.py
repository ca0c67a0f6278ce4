# cropsim/commands/common.py
import argparse
import logging
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from cropsim.dataset import load_manifest
from cropsim.dataset.models import SequenceRecord, Treatment, default_vocabulary
from cropsim.dataset.queries import GroundTruthQueries, ManifestQueries
from cropsim.utils.config import AppConfig, ExperimentConfig, load_config

logger = logging.getLogger(__name__)


class CommandError(Exception):
    """Domain error reported by a command; main maps it to exit code 1."""


def add_common_arguments(
    parser: argparse.ArgumentParser,
    *,
    checkpoint: bool = False,
    manifest: bool = True,
    split: str | None = None,
) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON or key=value config file")
    if checkpoint:
        parser.add_argument("--checkpoint", type=Path, required=True, help="generator checkpoint")
    if manifest:
        parser.add_argument("--manifest", type=Path, required=True, help="manifest.jsonl")
    if split is not None:
        parser.add_argument("--split", default=split, help=f"dataset split (default {split})")
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    parser.add_argument("--out", type=Path, required=True, help="output directory")


def experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        config = replace(
            config,
            train=replace(config.train, seed=args.seed),
            synth=replace(config.synth, seed=args.seed),
            regressor=replace(config.regressor, seed=args.seed),
        )
    return config


def seed_of(args: argparse.Namespace, default: int = 0) -> int:
    return args.seed if getattr(args, "seed", None) is not None else default


def app_config() -> AppConfig:
    return AppConfig()


def load_split(
    manifest: Path, split: str, *, require_biomass: bool = False
) -> list[SequenceRecord]:
    records = ManifestQueries.by_split(load_manifest(manifest, require_biomass=require_biomass), split)
    if not records:
        raise CommandError(f"split '{split}' of {manifest} is empty")
    return records


def load_vocabulary(manifest: Path, records: list[SequenceRecord] | None = None) -> list[Treatment]:
    """treatments.json beside the manifest, else the default grid sized to the manifest."""
    path = Path(manifest).parent / "treatments.json"
    if path.exists():
        return GroundTruthQueries.load_treatments(path)
    n = max((r.treatment_id for r in records or []), default=0) + 1
    logger.warning(f"No treatments.json beside {manifest}; assuming the default {n}-treatment grid")
    return default_vocabulary(n)


def load_ground_truth_rows(manifest: Path) -> dict | None:
    path = Path(manifest).parent / "ground_truth.jsonl"
    if not path.exists():
        logger.info(f"No ground-truth sidecar beside {manifest}")
        return None
    return GroundTruthQueries.load(path)


def composition_of(record: SequenceRecord, vocab: list[Treatment]) -> str:
    if 0 <= record.treatment_id < len(vocab):
        return vocab[record.treatment_id].composition
    return "unknown"


def biomass_at(record: SequenceRecord, time: int) -> tuple[float, float] | None:
    """Label at `time`, else linear interpolation over the labelled days (edge values held)."""
    exact = record.biomass(time)
    if exact is not None:
        return exact
    labelled = sorted(record.biomass_by_time)
    if not labelled:
        return None
    values = np.array([record.biomass_by_time[t] for t in labelled], dtype=np.float64)
    return (
        float(np.interp(time, labelled, values[:, 0])),
        float(np.interp(time, labelled, values[:, 1])),
    )


def select_records(records: list[SequenceRecord], sequence_ids: list[str]) -> list[SequenceRecord]:
    if not sequence_ids:
        return records
    by_id = {r.sequence_id: r for r in records}
    missing = [s for s in sequence_ids if s not in by_id]
    if missing:
        raise CommandError(f"unknown sequence ids: {missing}")
    return [by_id[s] for s in sequence_ids]


def write_csv(rows: list[dict[str, Any]], path: Path, columns: list[str] | None = None) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path
