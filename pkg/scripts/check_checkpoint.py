#!/usr/bin/env python3
"""
scripts/check_checkpoint.py
Inspect a generator checkpoint and optionally re-run validation to confirm the stored metric
"""

import argparse
import math
import sys
from pathlib import Path

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

import logging

import torch

from cropsim.dataset import load_manifest
from cropsim.dataset.queries import ManifestQueries
from cropsim.services.checkpoint_service import CheckpointService
from cropsim.services.training_service import TrainingService

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def check_checkpoint(path: Path, manifest: Path | None, tolerance: float) -> bool:
    checkpoints = CheckpointService()
    payload = checkpoints.load(path)
    config = checkpoints.train_config(payload)

    print("cropsim - Checkpoint Check")
    print("=" * 50)
    print(f"File: {path}")
    print(f"Format: {payload['format']}")
    print(f"Epoch: {payload['epoch']}")
    print(f"Conditions: {','.join(config.conditions)}")
    print(f"Image size: {config.image_size}")
    print(f"Extractor: {payload.get('extractor_source')}")
    best = payload.get("best", {})
    print(f"Best epoch: {best.get('epoch')} (val_perceptual={best.get('val_perceptual')})")
    history = payload.get("history", {}).get("val_perceptual", [])
    print(f"Validation history: {len(history)} entries")
    print()

    stored = payload.get("val_metric")
    if manifest is None or stored is None:
        print("⚠️ No manifest or stored metric - skipping validation replay")
        return True

    records = load_manifest(manifest)
    dtype = torch.float64 if payload.get("dtype") == "float64" else torch.float32
    trainer = TrainingService(config, dtype=dtype)
    trainer.load_state(payload)
    value = trainer.validate(ManifestQueries.by_split(records, "val"))
    ok = math.isclose(value, stored, rel_tol=0.0, abs_tol=tolerance)
    marker = "✅" if ok else "❌"
    print(f"{marker} Replayed val_perceptual={value:.8f}, stored={stored:.8f}")
    return ok


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("checkpoint", type=Path)
    parser.add_argument("--manifest", type=Path, default=None)
    parser.add_argument("--tolerance", type=float, default=1e-5)
    args = parser.parse_args()
    try:
        return 0 if check_checkpoint(args.checkpoint, args.manifest, args.tolerance) else 1
    except Exception as e:
        print(f"❌ Checkpoint check failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
