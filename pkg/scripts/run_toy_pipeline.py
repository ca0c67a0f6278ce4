#!/usr/bin/env python3
"""
scripts/run_toy_pipeline.py
Desk-scale pipeline: synth -> train -> train-regressor -> eval -> sweeps, then acceptance checks
"""

import argparse
import json
import sys
from pathlib import Path

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

import logging

from cropsim.main import main as cropsim_main

logging.basicConfig(level=logging.INFO, format="%(asctime)s - [TOY] - %(message)s", datefmt="%H:%M:%S")
logger = logging.getLogger(__name__)

TOY_CONFIG = Path(__file__).parent.parent / "cropsim" / "config" / "toy.json"


def run(step: str, argv: list[str]) -> None:
    logger.info(f"==> {step}: cropsim {' '.join(argv)}")
    code = cropsim_main(argv)
    if code != 0:
        raise SystemExit(f"{step} failed with exit code {code}")


def read_summary(out_dir: Path) -> dict:
    with open(out_dir / "summary.json", encoding="utf-8") as f:
        return json.load(f)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("runs/toy"))
    parser.add_argument("--config", type=Path, default=TOY_CONFIG)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--skip-synth", action="store_true")
    args = parser.parse_args()

    data, train_dir, eval_dir = args.out / "data", args.out / "train", args.out / "eval"
    manifest = data / "manifest.jsonl"
    common = ["--config", str(args.config), "--seed", str(args.seed)]

    if not (args.skip_synth and manifest.exists()):
        run("synth", ["synth", *common, "--out", str(data)])
    train_args = ["train", *common, "--manifest", str(manifest), "--out", str(train_dir)]
    if args.epochs is not None:
        train_args += ["--epochs", str(args.epochs)]
    run("train", train_args)
    run(
        "train-regressor",
        ["train-regressor", *common, "--manifest", str(manifest), "--out", str(args.out / "regressor")],
    )
    checkpoint = ["--checkpoint", str(train_dir / "best.pt"), "--manifest", str(manifest)]
    regressor = ["--regressor", str(args.out / "regressor" / "biomass.pt")]
    run("eval", ["eval", *checkpoint, *regressor, "--seed", str(args.seed), "--out", str(eval_dir)])
    run(
        "sweep-time",
        [
            "sweep-time",
            *checkpoint,
            "--seed",
            str(args.seed),
            "--max-sequences",
            "4",
            "--out",
            str(args.out / "sweep_time"),
        ],
    )

    sweeps = {
        "variability": ["--noise-draws", "10"],
        "sweep-treatment": [*regressor, "--change", "density"],
        "sweep-biomass": [*regressor, "--scales", "50,75,100,125,150"],
    }
    for step, extra in sweeps.items():
        out = ["--seed", str(args.seed), "--out", str(args.out / step)]
        run(step, [step, *checkpoint, *extra, *out])

    with open(eval_dir / "report.json", encoding="utf-8") as f:
        report = json.load(f)
    summaries = {step: read_summary(args.out / step) for step in sweeps}
    ms_ssim = report["ms_ssim"]
    ratios = report.get("truth_mae_ratio", {})
    treatment = summaries["sweep-treatment"]
    monotone = [summaries["sweep-biomass"].get(k) for k in ("monotone_sw", "monotone_fb")]

    checks = [
        ("T0 MS-SSIM >= 0.85", ms_ssim.get("T0", 0.0) >= 0.85),
        ("ST MS-SSIM > LT MS-SSIM", ms_ssim.get("ST", 0.0) > ms_ssim.get("LT", 1.0)),
        (
            "generated trait MAE <= 2x real-image MAE against ground truth",
            bool(ratios) and all(r <= 2.0 for r in ratios.values()),
        ),
        (
            "per-species biomass ME monotone for >= 80% of adjacent scales",
            all(m is not None and m >= 0.8 for m in monotone),
        ),
        (
            "density increase raises the trait (sign test p < 0.05, >= 20 replicates)",
            treatment.get("replicates", 0) >= 20
            and treatment.get("mean_diff", 0.0) > 0
            and treatment.get("sign_test_p", 1.0) < 0.05,
        ),
        (
            "variability maximum on the plant boundary for >= 60% of images",
            (summaries["variability"].get("max_on_boundary_fraction") or 0.0) >= 0.6,
        ),
    ]

    print()
    print("cropsim - Toy Acceptance Summary")
    print("=" * 50)
    print(f"Extractor: {report['extractor_source']}")
    print(f"MS-SSIM by bucket: {ms_ssim}")
    print(f"FID: {report['fid']}")
    print(f"Trait MAE ratios: {ratios}")
    print(f"Biomass monotone fractions: {monotone}")
    print(f"Treatment sign test: p={treatment.get('sign_test_p')}")
    for label, ok in checks:
        print(f"{'✅' if ok else '❌'} {label}")
    return 0 if all(ok for _, ok in checks) else 1


if __name__ == "__main__":
    sys.exit(main())
