"""
cropsim/commands/sweeps.py
Simulation sweeps over a trained generator: time-varying prediction, noise variability,
treatment change, biomass ratios and daily OOD grids
"""

import argparse
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch
from scipy import ndimage
from scipy.stats import binomtest

from cropsim.commands.common import (
    CommandError,
    add_common_arguments,
    app_config,
    biomass_at,
    composition_of,
    load_split,
    load_vocabulary,
    select_records,
    seed_of,
    write_csv,
)
from cropsim.dataset.models import ConditionSet, SequenceRecord, Treatment, find_changed
from cropsim.dataset.sampling import ImageCache, condition_for
from cropsim.dataset.synth import expected_biomass, load_synth_config
from cropsim.metrics.image_quality import ms_ssim, perceptual_distance
from cropsim.metrics.report import bucket_of
from cropsim.nn.feature_extractor import FeatureExtractor, build_extractor
from cropsim.services.inference_service import InferenceService
from cropsim.services.logging_service import LogCategory, LogLevel, RunLogger
from cropsim.services.render_service import GridCell, render_grid, std_image
from cropsim.services.service_loader import init_inference_service, init_regressor, prepare_runtime
from cropsim.traits.estimator import TraitEstimator
from cropsim.traits.evaluation import trait_mae_me, trait_mae_me_by_group
from cropsim.utils.config import SweepSpec, SynthConfig
from cropsim.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

MAX_GRID_SEQUENCES = 8

TIME_COLUMNS = [
    "sequence_id",
    "t_in",
    "t_gen",
    "delta_t",
    "bucket",
    "ood",
    "has_reference",
    "ms_ssim",
    "perceptual",
    "pla_gen",
    "pla_ref",
    "delta_pla",
    "bm_sw_gen",
    "bm_sw_ref",
    "delta_bm_sw",
    "bm_fb_gen",
    "bm_fb_ref",
    "delta_bm_fb",
    "std_mean",
]


def _int_list(raw: str | None) -> list[int]:
    if not raw:
        return []
    return [int(p) for p in raw.split(",") if p.strip()]


def _str_list(raw: str | None) -> list[str]:
    if not raw:
        return []
    return [p.strip() for p in raw.split(",") if p.strip()]


def _sweep_parser(subparsers: argparse._SubParsersAction, name: str, help_text: str):
    parser = subparsers.add_parser(name, help=help_text)
    add_common_arguments(parser, checkpoint=True, split="test")
    parser.add_argument("--sequence-ids", default=None, help="comma list; default all in split")
    parser.add_argument("--max-sequences", type=int, default=None)
    parser.add_argument("--t-in", type=int, default=None, help="input day (default first day)")
    parser.add_argument("--times", default=None, help="comma list of generation days")
    parser.add_argument("--regressor", type=Path, default=None, help="biomass estimator checkpoint")
    parser.add_argument("--gsd", type=float, default=None)
    parser.add_argument("--noise-draws", type=int, default=10)
    return parser


def register(subparsers: argparse._SubParsersAction) -> None:
    p = _sweep_parser(subparsers, "sweep-time", "predict each input at a list of days")
    p.set_defaults(handler=cmd_sweep_time, mode="time")

    p = _sweep_parser(subparsers, "variability", "per-pixel std over repeated noise draws")
    p.set_defaults(handler=cmd_variability, mode="variability")

    p = _sweep_parser(subparsers, "sweep-treatment", "original vs changed treatment predictions")
    p.add_argument("--target-treatment", type=int, default=None)
    p.add_argument("--change", choices=["density", "composition"], default=None)
    p.set_defaults(handler=cmd_sweep_treatment, mode="treatment")

    p = _sweep_parser(subparsers, "sweep-biomass", "predictions under scaled biomass conditions")
    p.add_argument("--scales", default="50,75,100,125,150", help="percent scales")
    p.add_argument(
        "--ratio-mode", choices=["complementary", "sw", "fb", "grid"], default="complementary"
    )
    p.set_defaults(handler=cmd_sweep_biomass, mode="biomass")

    p = _sweep_parser(subparsers, "ood-grid", "daily prediction grid reaching past the trained days")
    p.add_argument("--days", default=None, help="start:stop[:step], inclusive; default 1:1.25*last")
    p.add_argument("--columns", type=int, default=12, help="frames per grid row")
    p.set_defaults(handler=cmd_ood_grid, mode="ood-grid")


@dataclass
class SweepContext:
    spec: SweepSpec
    service: InferenceService
    records: list[SequenceRecord]
    vocab: list[Treatment]
    estimator: TraitEstimator
    synth_config: SynthConfig | None
    cache: ImageCache
    run_logger: RunLogger
    extractor: FeatureExtractor

    @property
    def out_dir(self) -> Path:
        return self.spec.out_dir

    def t_in_for(self, record: SequenceRecord) -> int:
        if self.spec.t_in is None:
            return record.times[0]
        if self.spec.t_in not in record.times:
            raise CommandError(f"{record.sequence_id} has no image at t_in={self.spec.t_in}")
        return self.spec.t_in

    def y_gen_for(self, record: SequenceRecord, t: int, treatment: int | None = None) -> ConditionSet:
        """Generation-side conditions at any day; biomass is interpolated between labelled days."""
        b = biomass_at(record, t) if "b" in self.service.conditions else None
        c = record.treatment_id if treatment is None else treatment
        return ConditionSet(t=t, c=c, b=b)

    def image(self, record: SequenceRecord, t: int) -> torch.Tensor:
        return self.cache.get(record.sequence_id, t)

    def write_summary(self, summary: dict[str, Any]) -> None:
        summary = {"mode": self.spec.mode, "seed": self.spec.seed, **summary}
        self.run_logger.write_summary(summary, name="summary.json")


def build_spec(args: argparse.Namespace, records: list[SequenceRecord], **extra) -> SweepSpec:
    times = _int_list(args.times)
    if not times and args.mode in ("time", "ood-grid"):
        times = sorted({t for r in records for t in r.times})
    return SweepSpec(
        mode=args.mode,
        out_dir=args.out,
        split=args.split,
        sequence_ids=[r.sequence_id for r in records],
        t_in=args.t_in,
        times=times,
        noise_draws=args.noise_draws,
        seed=seed_of(args),
        **extra,
    )


def build_context(args: argparse.Namespace, **spec_extra) -> SweepContext:
    seed = seed_of(args)
    device = prepare_runtime(app_config(), seed)
    service = init_inference_service(args.checkpoint, device=device)
    records = load_split(args.manifest, args.split)
    records = select_records(records, _str_list(args.sequence_ids))
    if args.max_sequences is not None:
        records = records[: args.max_sequences]
    if "b" in service.conditions:
        unlabelled = [r.sequence_id for r in records if not r.has_biomass()]
        if unlabelled:
            raise CommandError(f"biomass-conditioned model needs labelled inputs: {unlabelled[:5]}")
    spec = build_spec(args, records, **spec_extra)
    synth_config = load_synth_config(args.manifest.parent)
    gsd = args.gsd or (synth_config.gsd_mm if synth_config is not None else 1.0)
    config = service.config
    ctx = SweepContext(
        spec=spec,
        service=service,
        records=records,
        vocab=load_vocabulary(args.manifest, records),
        estimator=TraitEstimator(regressor=init_regressor(args.regressor, device=device), gsd_mm=gsd),
        synth_config=synth_config,
        cache=ImageCache(records, config.image_size),
        run_logger=RunLogger(spec.out_dir),
        extractor=build_extractor(config.extractor, config.extractor_seed),
    )
    ctx.run_logger.log(
        LogCategory.SWEEP,
        LogLevel.INFO,
        f"Sweep '{spec.mode}' on {len(records)} sequences",
        {"split": spec.split, "seed": spec.seed, "conditions": ",".join(service.conditions)},
    )
    return ctx


# ---- time ----


def time_sweep_rows(
    ctx: SweepContext, record: SequenceRecord, times: list[int], *, variability: bool = True
) -> tuple[list[dict[str, Any]], list[list[GridCell]]]:
    """One CSV row per requested day plus grid rows (reference / generated / variability)."""
    t_in = ctx.t_in_for(record)
    x_in = ctx.image(record, t_in)
    y_in = condition_for(record, t_in)
    y_gens = [ctx.y_gen_for(record, t) for t in times]
    z = ctx.service.noise(len(times), derive_seed(ctx.spec.seed, record.sequence_id, "time"))
    x_gen = ctx.service.predict(
        x_in[None].expand(len(times), *x_in.shape), [y_in] * len(times), y_gens, z=z
    ).float()
    span = (record.times[0], record.times[-1])
    ood = [ctx.service.is_ood(y) or not span[0] <= y.t <= span[1] for y in y_gens]

    gen_traits = ctx.estimator.values(x_gen)
    ref_times = [t for t in times if t in record.times]
    ref_traits = {}
    if ref_times:
        ref_traits = ctx.estimator.values(torch.stack([ctx.image(record, t) for t in ref_times]))
    ref_index = {t: i for i, t in enumerate(ref_times)}

    rows, ref_row, gen_row, var_row = [], [], [], []
    for i, t in enumerate(times):
        has_ref = t in ref_index and not ood[i]
        row: dict[str, Any] = {
            "sequence_id": record.sequence_id,
            "t_in": t_in,
            "t_gen": t,
            "delta_t": t - t_in,
            "bucket": bucket_of(t - t_in),
            "ood": ood[i],
            "has_reference": has_ref,
        }
        if has_ref:
            x_ref = ctx.image(record, t)
            row["ms_ssim"] = float(ms_ssim(x_gen[i], x_ref))
            row["perceptual"] = float(perceptual_distance(x_gen[i], x_ref, ctx.extractor))
            for key, name in (("pla_pct", "pla"), ("bm_sw", "bm_sw"), ("bm_fb", "bm_fb")):
                if key in gen_traits:
                    gen_v, ref_v = gen_traits[key][i], ref_traits[key][ref_index[t]]
                    row[f"{name}_gen"], row[f"{name}_ref"] = gen_v, ref_v
                    row[f"delta_{name}"] = gen_v - ref_v
        else:
            for key, name in (("pla_pct", "pla"), ("bm_sw", "bm_sw"), ("bm_fb", "bm_fb")):
                if key in gen_traits:
                    row[f"{name}_gen"] = gen_traits[key][i]

        if variability:
            seed = derive_seed(ctx.spec.seed, record.sequence_id, t)
            result = ctx.service.variability(x_in, y_in, y_gens[i], ctx.spec.noise_draws, seed)
            row["std_mean"] = float(result.std.mean())
            var_row.append(GridCell(std_image(result.std), caption=f"sd t{t}"))
        rows.append(row)

        ref_row.append(
            GridCell(
                ctx.image(record, t) if t in record.times else None,
                border="input" if t == t_in else None,
                caption=f"t{t}",
            )
        )
        gen_row.append(GridCell(x_gen[i], border="ood" if ood[i] else None, caption=f"t{t}"))

    grid = [ref_row, gen_row] + ([var_row] if variability else [])
    return rows, grid


def cmd_sweep_time(args: argparse.Namespace) -> int:
    ctx = build_context(args)
    all_rows = []
    for n, record in enumerate(ctx.records):
        rows, grid = time_sweep_rows(ctx, record, ctx.spec.times)
        all_rows.extend(rows)
        if n < MAX_GRID_SEQUENCES:
            render_grid(
                grid,
                ctx.out_dir / "grids" / f"{record.sequence_id}.png",
                row_labels=["reference", "generated", "variability"],
            )
    write_csv(all_rows, ctx.out_dir / "sweep_time.csv", TIME_COLUMNS)

    scored = [r for r in all_rows if r["has_reference"]]
    by_bucket = {}
    for bucket in ("T0", "ST", "LT"):
        values = [r["ms_ssim"] for r in scored if r["bucket"] == bucket]
        if values:
            by_bucket[bucket] = float(np.mean(values))
    ctx.write_summary(
        {
            "times": ctx.spec.times,
            "rows": len(all_rows),
            "scored_pairs": len(scored),
            "ood_frames": sum(1 for r in all_rows if r["ood"]),
            "ms_ssim_by_bucket": by_bucket,
        }
    )
    return 0


# ---- ood grid ----


def parse_days(raw: str | None, records: list[SequenceRecord]) -> list[int]:
    last = max(t for r in records for t in r.times)
    if not raw:
        return list(range(1, int(round(1.25 * last)) + 1))
    parts = [int(p) for p in raw.split(":")]
    if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] < 1):
        raise CommandError(f"--days must be start:stop[:step], got {raw!r}")
    start, stop = parts[0], parts[1]
    step = parts[2] if len(parts) == 3 else 1
    days = list(range(start, stop + 1, step))
    if not days:
        raise CommandError(f"--days {raw!r} selects no days")
    return days


def cmd_ood_grid(args: argparse.Namespace) -> int:
    # --times wins over --days
    if not args.times:
        probe = select_records(load_split(args.manifest, args.split), _str_list(args.sequence_ids))
        args.times = ",".join(str(d) for d in parse_days(args.days, probe))
    ctx = build_context(args)
    columns = max(1, args.columns)
    all_rows = []
    for n, record in enumerate(ctx.records):
        rows, grid = time_sweep_rows(ctx, record, ctx.spec.times, variability=False)
        all_rows.extend(rows)
        if n < MAX_GRID_SEQUENCES:
            generated = grid[1]
            wrapped = [generated[i : i + columns] for i in range(0, len(generated), columns)]
            render_grid(wrapped, ctx.out_dir / "grids" / f"{record.sequence_id}.png")
    write_csv(all_rows, ctx.out_dir / "ood_grid.csv", TIME_COLUMNS)
    ctx.write_summary(
        {
            "days": [ctx.spec.times[0], ctx.spec.times[-1]],
            "frames": len(all_rows),
            "ood_frames": sum(1 for r in all_rows if r["ood"]),
        }
    )
    return 0


# ---- variability ----


def boundary_mask(mask: np.ndarray) -> np.ndarray:
    """Dilation minus erosion of a binary plant mask."""
    return ndimage.binary_dilation(mask) & ~ndimage.binary_erosion(mask)


def max_on_boundary(std: np.ndarray, plant: np.ndarray) -> bool | None:
    """Whether the per-pixel std peaks on the plant boundary; None for an all-zero std image."""
    if std.max() <= 0:
        return None
    iy, ix = np.unravel_index(int(np.argmax(std)), std.shape)
    return bool(boundary_mask(plant)[iy, ix])


def boundary_fraction(flags: list[bool | None]) -> float | None:
    checked = [f for f in flags if f is not None]
    return float(np.mean(checked)) if checked else None


def cmd_variability(args: argparse.Namespace) -> int:
    ctx = build_context(args)
    segmenter = ctx.estimator.segmenter
    std_dir = ctx.out_dir / "std"
    std_dir.mkdir(parents=True, exist_ok=True)
    rows, grid = [], []
    for n, record in enumerate(ctx.records):
        t_in = ctx.t_in_for(record)
        t_gen = ctx.spec.times[0] if ctx.spec.times else record.times[-1]
        x_in = ctx.image(record, t_in)
        result = ctx.service.variability(
            x_in,
            condition_for(record, t_in),
            ctx.y_gen_for(record, t_gen),
            ctx.spec.noise_draws,
            derive_seed(ctx.spec.seed, record.sequence_id),
        )
        std = result.std.numpy()
        np.save(std_dir / f"{record.sequence_id}_t{t_gen:03d}.npy", std)

        # undefined for a single draw: the std image is all zeros
        on_boundary = max_on_boundary(std, segmenter.predict(result.mean).masks.any(axis=0))
        rows.append(
            {
                "sequence_id": record.sequence_id,
                "t_in": t_in,
                "t_gen": t_gen,
                "n_draws": ctx.spec.noise_draws,
                "std_mean": float(std.mean()),
                "std_max": float(std.max()),
                "max_on_boundary": on_boundary,
            }
        )
        if n < MAX_GRID_SEQUENCES:
            grid.append(
                [
                    GridCell(x_in, border="input", caption=f"t{t_in}"),
                    GridCell(result.mean, caption=f"mean t{t_gen}"),
                    GridCell(std_image(result.std), caption="sd x4"),
                ]
            )
    write_csv(rows, ctx.out_dir / "variability.csv")
    render_grid(grid, ctx.out_dir / "variability.png")
    fraction = boundary_fraction([r["max_on_boundary"] for r in rows])
    ctx.write_summary(
        {
            "n_draws": ctx.spec.noise_draws,
            "images": len(rows),
            "std_mean": float(np.mean([r["std_mean"] for r in rows])),
            "max_on_boundary_fraction": fraction,
        }
    )
    ctx.run_logger.log(
        LogCategory.SWEEP,
        LogLevel.SUCCESS,
        "Variability finished",
        {"images": len(rows), "max_on_boundary_fraction": fraction},
    )
    return 0


# ---- treatment ----


def resolve_target(ctx: SweepContext, source: Treatment) -> Treatment | None:
    spec = ctx.spec
    if spec.target_treatment is not None:
        if not 0 <= spec.target_treatment < len(ctx.vocab):
            raise CommandError(
                f"target treatment {spec.target_treatment} outside the vocabulary 0..{len(ctx.vocab) - 1}"
            )
        return ctx.vocab[spec.target_treatment]
    return find_changed(ctx.vocab, source, spec.change)


def oracle_total(ctx: SweepContext, treatment: Treatment, t: int) -> float | None:
    if ctx.synth_config is None:
        return None
    return float(sum(expected_biomass(ctx.synth_config, treatment, t)))


def sign_test(diffs: list[float]) -> tuple[int, float | None]:
    """Replicates with an increase and the one-sided sign-test p-value (ties dropped)."""
    nonzero = [d for d in diffs if d != 0]
    k = sum(1 for d in nonzero if d > 0)
    if not nonzero:
        return k, None
    return k, float(binomtest(k, len(nonzero), 0.5, alternative="greater").pvalue)


def cmd_sweep_treatment(args: argparse.Namespace) -> int:
    if args.target_treatment is None and args.change is None:
        raise CommandError("sweep-treatment needs --target-treatment or --change")
    ctx = build_context(args, target_treatment=args.target_treatment, change=args.change)
    if "c" not in ctx.service.conditions:
        raise CommandError("treatment sweeps need a checkpoint trained with the treatment condition")
    trait = "bm_total" if ctx.estimator.regressor is not None else "pla_pct"

    replicates, grid = [], []
    for record in ctx.records:
        source = ctx.vocab[record.treatment_id]
        target = resolve_target(ctx, source)
        if target is None:
            logger.info(f"{record.sequence_id}: no {ctx.spec.change} change from {source.name}")
            continue
        t_in = ctx.t_in_for(record)
        t_gen = ctx.spec.times[-1] if ctx.spec.times else record.times[-1]
        x_in = ctx.image(record, t_in)
        y_in = condition_for(record, t_in)
        y_orig = ctx.y_gen_for(record, t_gen)
        y_changed = ctx.y_gen_for(record, t_gen, treatment=target.id)
        oracle_b = "b" in ctx.service.conditions and ctx.synth_config is not None
        if oracle_b and target.id != source.id:
            # the changed plot's biomass comes from the process oracle of the new treatment
            y_changed = ConditionSet(
                t=t_gen, c=target.id, b=expected_biomass(ctx.synth_config, target, t_gen)
            )
        z = ctx.service.noise(1, derive_seed(ctx.spec.seed, record.sequence_id, "treatment"))
        x_gen = ctx.service.predict(
            torch.stack([x_in, x_in]), [y_in, y_in], [y_orig, y_changed], z=z.expand(2, -1)
        ).float()
        pla, bm = ctx.estimator.estimate(x_gen)
        values = [e.bm_total for e in bm] if bm is not None else [e.pla_pct for e in pla]
        replicates.append(
            {
                "sequence_id": record.sequence_id,
                "treatment": source.name,
                "treatment_changed": target.name,
                "t_gen": t_gen,
                "trait": trait,
                "original": values[0],
                "changed": values[1],
                "diff": values[1] - values[0],
                "oracle_original": oracle_total(ctx, source, t_gen),
                "oracle_changed": oracle_total(ctx, target, t_gen),
            }
        )
        if len(grid) < MAX_GRID_SEQUENCES:
            grid.append(
                [
                    GridCell(x_in, border="input", caption=f"t{t_in}"),
                    GridCell(ctx.image(record, t_gen) if t_gen in record.times else None, caption="ref"),
                    GridCell(x_gen[0], caption=source.name),
                    GridCell(x_gen[1], caption=target.name),
                ]
            )
    if not replicates:
        raise CommandError("no input sequence admits the requested treatment change")

    bars = []
    for name in sorted({r["treatment"] for r in replicates}):
        subset = [r for r in replicates if r["treatment"] == name]
        for variant in ("original", "changed"):
            vals = np.array([r[variant] for r in subset])
            used_key = "treatment" if variant == "original" else "treatment_changed"
            bars.append(
                {
                    "treatment": name,
                    "variant": variant,
                    "treatment_used": subset[0][used_key],
                    "trait": trait,
                    "mean": float(vals.mean()),
                    "std": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
                    "n": len(vals),
                    "oracle": subset[0][f"oracle_{variant}"],
                }
            )
    write_csv(replicates, ctx.out_dir / "treatment_replicates.csv")
    write_csv(bars, ctx.out_dir / "treatment_bars.csv")
    if grid:
        render_grid(
            grid,
            ctx.out_dir / "treatment_grid.png",
            column_labels=["input", "reference", "original", "changed"],
        )

    diffs = [r["diff"] for r in replicates]
    increased, p_value = sign_test(diffs)
    ctx.write_summary(
        {
            "trait": trait,
            "replicates": len(replicates),
            "mean_diff": float(np.mean(diffs)),
            "increased": increased,
            "sign_test_p": p_value,
        }
    )
    ctx.run_logger.log(
        LogCategory.SWEEP,
        LogLevel.SUCCESS,
        "Treatment sweep finished",
        {"replicates": len(replicates), "increased": increased, "p": p_value},
    )
    return 0


# ---- biomass ----


def monotone_fraction(me_by_pair: dict[tuple[int, int], float], species: int) -> float | None:
    """Share of adjacent grid points (along one species' scale) whose ME does not decrease."""
    other = 1 - species
    others = [pair[other] for pair in me_by_pair]
    # a grid holds lines of fixed other-species scale; ratio axes form a single line
    shared = len(set(others)) < len(others)
    lines: dict[int, list[tuple[int, float]]] = {}
    for pair, me in me_by_pair.items():
        lines.setdefault(pair[other] if shared else 0, []).append((pair[species], me))
    steps = []
    for points in lines.values():
        points.sort()
        if len({x for x, _ in points}) < 2:
            continue
        steps.extend(b[1] >= a[1] for a, b in zip(points, points[1:]))
    return float(np.mean(steps)) if steps else None


def cmd_sweep_biomass(args: argparse.Namespace) -> int:
    ctx = build_context(args, scales=_int_list(args.scales), ratio_mode=args.ratio_mode)
    if "b" not in ctx.service.conditions:
        raise CommandError("biomass sweeps need a checkpoint trained with the biomass condition")
    if ctx.estimator.regressor is None:
        raise CommandError("biomass sweeps need --regressor")
    pairs = ctx.spec.scale_pairs()
    groups_by_sequence = {r.sequence_id: composition_of(r, ctx.vocab) for r in ctx.records}

    image_rows = []
    for record in ctx.records:
        t_in = ctx.t_in_for(record)
        x_in = ctx.image(record, t_in)
        y_in = condition_for(record, t_in)
        times = [t for t in (ctx.spec.times or record.times) if record.biomass(t) is not None]
        for t_gen in times:
            base = condition_for(record, t_gen)
            y_gens = [base.scaled_biomass(s_sw, s_fb) for s_sw, s_fb in pairs]
            z = ctx.service.noise(1, derive_seed(ctx.spec.seed, record.sequence_id, t_gen))
            x_gen = ctx.service.predict(
                x_in[None].expand(len(pairs), *x_in.shape),
                [y_in] * len(pairs),
                y_gens,
                z=z.expand(len(pairs), -1),
            ).float()
            for (s_sw, s_fb), est in zip(pairs, ctx.estimator.biomass(x_gen)):
                image_rows.append(
                    {
                        "sequence_id": record.sequence_id,
                        "group": groups_by_sequence[record.sequence_id],
                        "t_in": t_in,
                        "t_gen": t_gen,
                        "s_sw": s_sw,
                        "s_fb": s_fb,
                        "bm_sw_gen": est.bm_sw,
                        "bm_fb_gen": est.bm_fb,
                        "bm_sw_ref": base.b[0],
                        "bm_fb_ref": base.b[1],
                    }
                )
    if not image_rows:
        raise CommandError("no labelled generation days for the biomass sweep")

    curve = []
    me_sw, me_fb = {}, {}
    for s_sw, s_fb in pairs:
        subset = [r for r in image_rows if r["s_sw"] == s_sw and r["s_fb"] == s_fb]
        groups = [r["group"] for r in subset]
        stats_sw = trait_mae_me_by_group(
            [r["bm_sw_gen"] for r in subset], [r["bm_sw_ref"] for r in subset], groups
        )
        stats_fb = trait_mae_me_by_group(
            [r["bm_fb_gen"] for r in subset], [r["bm_fb_ref"] for r in subset], groups
        )
        for group in stats_sw:
            curve.append(
                {
                    "s_sw": s_sw,
                    "s_fb": s_fb,
                    "group": group,
                    "mae_sw": stats_sw[group]["mae"],
                    "me_sw": stats_sw[group]["me"],
                    "mae_fb": stats_fb[group]["mae"],
                    "me_fb": stats_fb[group]["me"],
                    "n": stats_sw[group]["n"],
                }
            )
        me_sw[(s_sw, s_fb)] = stats_sw["overall"]["me"]
        me_fb[(s_sw, s_fb)] = stats_fb["overall"]["me"]

    write_csv(image_rows, ctx.out_dir / "biomass_images.csv")
    write_csv(curve, ctx.out_dir / "biomass_curve.csv")
    overall = [r for r in curve if r["group"] == "overall"]
    best = min(overall, key=lambda r: r["mae_sw"] + r["mae_fb"])
    anchor = [r for r in image_rows if r["s_sw"] == 100 and r["s_fb"] == 100]
    anchor_mae = trait_mae_me([r["bm_sw_gen"] for r in anchor], [r["bm_sw_ref"] for r in anchor])[0]
    summary = {
        "ratio_mode": ctx.spec.ratio_mode,
        "pairs": [list(p) for p in pairs],
        "images": len(image_rows) // len(pairs),
        "monotone_sw": monotone_fraction(me_sw, 0),
        "monotone_fb": monotone_fraction(me_fb, 1),
        "min_mae_pair": [best["s_sw"], best["s_fb"]],
        "anchor_mae_sw": anchor_mae,
    }
    ctx.write_summary(summary)
    ctx.run_logger.log(LogCategory.SWEEP, LogLevel.SUCCESS, "Biomass sweep finished", summary)
    with open(ctx.out_dir / "biomass_curve.json", "w", encoding="utf-8") as f:
        json.dump({"curve": curve, **summary}, f, indent=2)
    return 0
