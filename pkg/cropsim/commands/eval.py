"""
cropsim/commands/eval.py
Test-split evaluation: every ordered (t_in, t_gen) pair of each sequence is generated and scored
with MS-SSIM, perceptual distance and FID, bucketed by |delta t|, plus trait errors
"""

import argparse
import logging
import math
from pathlib import Path

import numpy as np
import torch
from tqdm import tqdm

from cropsim.commands.common import (
    add_common_arguments,
    app_config,
    composition_of,
    load_ground_truth_rows,
    load_split,
    load_vocabulary,
    seed_of,
)
from cropsim.dataset.models import SequenceRecord
from cropsim.dataset.sampling import ImageCache, condition_for
from cropsim.dataset.synth import load_synth_config
from cropsim.metrics.image_quality import ms_ssim, perceptual_distance
from cropsim.metrics.report import BUCKETS, MetricReport, PairRecord, bucket_of, bucket_report
from cropsim.nn.feature_extractor import build_extractor
from cropsim.services.inference_service import InferenceService
from cropsim.services.logging_service import LogCategory, LogLevel, RunLogger
from cropsim.services.service_loader import init_inference_service, init_regressor, prepare_runtime
from cropsim.traits.evaluation import trait_mae_me_by_group
from cropsim.traits.estimator import TraitEstimator
from cropsim.traits.models import TraitEstimate, write_traits_csv
from cropsim.utils.seeding import derive_seed

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("eval", help="bucketed image-quality and trait evaluation")
    add_common_arguments(parser, checkpoint=True, split="test")
    parser.add_argument("--regressor", type=Path, default=None, help="biomass estimator checkpoint")
    parser.add_argument("--gsd", type=float, default=None, help="mm per pixel (default from dataset)")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.set_defaults(handler=cmd_eval)


def sequence_pairs(record: SequenceRecord) -> list[tuple[int, int]]:
    return [(t_in, t_gen) for t_in in record.times for t_gen in record.times]


def grouped_errors(
    gen: dict[str, list[float]],
    ref: dict[str, list[float]],
    groups: list[str],
    buckets: list[str] | None = None,
) -> dict[str, dict]:
    """trait -> bucket (and "all") -> group -> {mae, me, n}."""
    out: dict[str, dict] = {}
    for key in gen:
        if key not in ref:
            continue
        per_bucket = {"all": trait_mae_me_by_group(gen[key], ref[key], groups)}
        if buckets is not None:
            for bucket in BUCKETS:
                idx = [i for i, b in enumerate(buckets) if b == bucket]
                if idx:
                    per_bucket[bucket] = trait_mae_me_by_group(
                        [gen[key][i] for i in idx], [ref[key][i] for i in idx], [groups[i] for i in idx]
                    )
        out[key] = per_bucket
    return out


def truth_values(
    records: list[SequenceRecord], truth: dict | None, image_size: int
) -> dict[str, list[float]]:
    """Ground-truth traits in image order (records x times); PLA needs the ground-truth sidecar."""
    values: dict[str, list[float]] = {"bm_sw": [], "bm_fb": []}
    pla = []
    for record in records:
        for t in record.times:
            bm = record.biomass(t)
            if bm is not None:
                values["bm_sw"].append(bm[0])
                values["bm_fb"].append(bm[1])
            if truth is not None and (record.sequence_id, t) in truth:
                pla.append(100.0 * truth[(record.sequence_id, t)].pla_px / (image_size * image_size))
    n_images = sum(len(r.times) for r in records)
    if len(values["bm_sw"]) != n_images:
        values = {}
    if len(pla) == n_images:
        values["pla_pct"] = pla
    return values


def truth_at_targets(
    records: list[SequenceRecord], truth_traits: dict[str, list[float]]
) -> dict[str, list[float]]:
    """Re-index per-image ground truth to pair order: the value at t_gen of every sequence pair."""
    out: dict[str, list[float]] = {key: [] for key in truth_traits}
    offset = 0
    for record in records:
        index_of = {t: offset + i for i, t in enumerate(record.times)}
        for _, t_gen in sequence_pairs(record):
            for key, values in truth_traits.items():
                out[key].append(values[index_of[t_gen]])
        offset += len(record.times)
    return out


def truth_mae_ratios(gen_errors: dict[str, dict], real_errors: dict[str, dict]) -> dict[str, float]:
    """Overall generated-vs-truth MAE over real-vs-truth MAE, per trait present in both."""
    ratios = {}
    for key, per_bucket in gen_errors.items():
        if key not in real_errors:
            continue
        gen_mae = per_bucket["all"]["overall"]["mae"]
        real_mae = real_errors[key]["all"]["overall"]["mae"]
        ratios[key] = gen_mae / real_mae if real_mae > 0 else math.inf
    return ratios


def evaluate(
    service: InferenceService,
    records: list[SequenceRecord],
    *,
    estimator: TraitEstimator,
    groups_by_sequence: dict[str, str],
    truth: dict | None,
    seed: int,
    out_dir: Path,
    progress: bool = False,
) -> MetricReport:
    config = service.config
    extractor = build_extractor(config.extractor, config.extractor_seed)
    if service.extractor_source and service.extractor_source != extractor.source:
        logger.warning(
            f"Checkpoint was selected with {service.extractor_source}, evaluating with {extractor.source}"
        )
    cache = ImageCache(records, config.image_size)
    run_logger = RunLogger(out_dir)

    pair_records: list[PairRecord] = []
    feats_gen, feats_ref = [], []
    gen_traits: dict[str, list[float]] = {}
    ref_traits: dict[str, list[float]] = {}
    real_traits: dict[str, list[float]] = {}
    groups, buckets = [], []
    estimates: list[tuple[str, TraitEstimate]] = []

    for record in tqdm(records, desc="eval", disable=not progress):
        pairs = sequence_pairs(record)
        images = {t: cache.get(record.sequence_id, t) for t in record.times}
        x_in = torch.stack([images[t_in] for t_in, _ in pairs])
        x_ref = torch.stack([images[t_gen] for _, t_gen in pairs])
        y_in = [condition_for(record, t_in) for t_in, _ in pairs]
        y_gen = [condition_for(record, t_gen) for _, t_gen in pairs]
        x_gen = service.predict(x_in, y_in, y_gen, seed=derive_seed(seed, record.sequence_id)).float()

        ssim = ms_ssim(x_gen, x_ref)
        with torch.no_grad():
            dist = perceptual_distance(x_gen, x_ref, extractor)
            feats_gen.append(extractor.embed(x_gen).double().numpy())
            feats_ref.append(extractor.embed(x_ref).double().numpy())
        for (t_in, t_gen), s, d in zip(pairs, ssim.tolist(), dist.tolist()):
            pair_records.append(PairRecord(record.sequence_id, t_in, t_gen, s, d))
            buckets.append(bucket_of(t_gen - t_in))
            groups.append(groups_by_sequence[record.sequence_id])

        real = estimator.values(torch.stack([images[t] for t in record.times]))
        index_of = {t: i for i, t in enumerate(record.times)}
        pla_est, bm_est = estimator.estimate(x_gen)
        gen = estimator.as_values(pla_est, bm_est)
        for key, vals in gen.items():
            gen_traits.setdefault(key, []).extend(vals)
            ref_traits.setdefault(key, []).extend(real[key][index_of[t_gen]] for _, t_gen in pairs)
            real_traits.setdefault(key, []).extend(real[key])
        for i, (t_in, t_gen) in enumerate(pairs):
            image_id = f"{record.sequence_id}:{t_in}->{t_gen}"
            estimates.append((image_id, pla_est[i]))
            if bm_est is not None:
                estimates.append((image_id, bm_est[i]))

    report = bucket_report(
        pair_records,
        extractor_source=extractor.source,
        features_gen=np.concatenate(feats_gen),
        features_ref=np.concatenate(feats_ref),
    )
    report.trait_errors = grouped_errors(gen_traits, ref_traits, groups, buckets)

    image_groups = [groups_by_sequence[r.sequence_id] for r in records for _ in r.times]
    truth_traits = truth_values(records, truth, config.image_size)
    if truth_traits:
        report.real_trait_errors = grouped_errors(real_traits, truth_traits, image_groups)
        report.gen_truth_trait_errors = grouped_errors(
            gen_traits, truth_at_targets(records, truth_traits), groups, buckets
        )
        report.truth_mae_ratio = truth_mae_ratios(
            report.gen_truth_trait_errors, report.real_trait_errors
        )

    report.write_json(out_dir / "report.json")
    report.write_pairs_csv(out_dir / "pairs.csv")
    write_traits_csv(estimates, out_dir / "traits.csv")
    run_logger.log(
        LogCategory.EVAL,
        LogLevel.SUCCESS,
        f"Evaluated {len(pair_records)} pairs",
        {
            "ms_ssim": report.ms_ssim,
            "perceptual_mean": report.perceptual.get("mean"),
            "fid": report.fid,
            "truth_mae_ratio": report.truth_mae_ratio,
            "no_plant": estimator.stats["no_plant"],
        },
    )
    return report


def cmd_eval(args: argparse.Namespace) -> int:
    seed = seed_of(args)
    device = prepare_runtime(app_config(), seed)
    service = init_inference_service(args.checkpoint, device=device, batch_size=args.batch_size)
    records = load_split(args.manifest, args.split, require_biomass="b" in service.conditions)
    vocab = load_vocabulary(args.manifest, records)
    synth_config = load_synth_config(args.manifest.parent)
    gsd = args.gsd or (synth_config.gsd_mm if synth_config is not None else 1.0)
    estimator = TraitEstimator(regressor=init_regressor(args.regressor, device=device), gsd_mm=gsd)

    evaluate(
        service,
        records,
        estimator=estimator,
        groups_by_sequence={r.sequence_id: composition_of(r, vocab) for r in records},
        truth=load_ground_truth_rows(args.manifest),
        seed=seed,
        out_dir=args.out,
    )
    return 0
