"""
cropsim/dataset/synth.py
Procedural crop plots with analytically known traits

Each sequence is one plot position seen from above: a center plant surrounded by 4 (low density)
or 8 (high density) neighbours on textured soil. Plant area follows a logistic curve per plant, so
the center-plant PLA and the per-species biomass are known for every acquisition day.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage
from tqdm import tqdm

from cropsim.dataset.models import (
    GroundTruthRow,
    SequenceRecord,
    Treatment,
    default_vocabulary,
)
from cropsim.dataset.queries import GroundTruthQueries, ManifestQueries
from cropsim.traits.models import InstanceMasks, write_masks_json
from cropsim.utils.config import SynthConfig, build_dataclass, config_to_dict
from cropsim.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

SPECIES_TRAITS = {
    "sw": {"color": (168, 202, 72), "lobes": 7, "lobe_amp": 0.18, "area": 1.0, "midpoint": 0.0},
    "fb": {"color": (46, 126, 72), "lobes": 3, "lobe_amp": 0.12, "area": 1.15, "midpoint": 5.0},
}
SOIL_COLOR = np.array([122.0, 94.0, 68.0])
SITE_SOIL_SHIFT = np.array([-25.0, 5.0, 25.0])

# neighbour offsets in units of the plant spacing: edges first, corners for high density
NEIGHBOUR_OFFSETS = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)]
PLANT_SPACING = 0.375


@dataclass
class Plant:
    cx: float
    cy: float
    species: str
    a_max: float  # px
    k: float  # 1/day
    t0: float  # day
    rotation: float
    is_center: bool = False

    def area(self, t: float) -> float:
        return self.a_max / (1.0 + math.exp(-self.k * (t - self.t0)))


def logistic_area(config: SynthConfig, treatment: Treatment, species: str, t: float) -> float:
    """Un-jittered plant area in px for one plant of the given species and treatment."""
    return _plant(config, treatment, species, 0.0, 0.0, None).area(t)


def _plant(
    config: SynthConfig,
    treatment: Treatment,
    species: str,
    cx: float,
    cy: float,
    rng: np.random.Generator | None,
) -> Plant:
    traits = SPECIES_TRAITS[species]
    dense = 1.0 if treatment.density == "H" else 0.0
    image_area = config.image_size * config.image_size
    a_max = config.max_cover * image_area * traits["area"] * (1.0 - config.density_area_gain * dense)
    k = config.growth_rate * (1.0 + config.density_rate_gain * dense)
    rotation = 0.0
    if rng is not None:
        a_max *= rng.uniform(1.0 - config.jitter, 1.0 + config.jitter)
        k *= rng.uniform(1.0 - config.jitter / 2, 1.0 + config.jitter / 2)
        rotation = rng.uniform(0.0, 2.0 * math.pi)
    return Plant(
        cx=cx,
        cy=cy,
        species=species,
        a_max=a_max,
        k=k,
        t0=config.midpoint_day + traits["midpoint"],
        rotation=rotation,
    )


def layout(
    config: SynthConfig, treatment: Treatment, rng: np.random.Generator | None = None
) -> list[Plant]:
    """Plants of one plot, center plant first. rng=None gives the nominal layout."""
    size = config.image_size
    center = float(size // 2)
    spacing = PLANT_SPACING * size
    n_neighbours = 8 if treatment.density == "H" else 4
    max_shift = size // 32

    if treatment.is_mixture:
        center_species = "sw"
    else:
        center_species = treatment.composition
    plants = [_plant(config, treatment, center_species, center, center, rng)]
    plants[0].is_center = True
    for i, (ox, oy) in enumerate(NEIGHBOUR_OFFSETS[:n_neighbours]):
        species = ("fb" if i % 2 == 0 else "sw") if treatment.is_mixture else treatment.composition
        sx = sy = 0
        if rng is not None and max_shift:
            sx, sy = (int(v) for v in rng.integers(-max_shift, max_shift + 1, size=2))
        plants.append(
            _plant(config, treatment, species, center + ox * spacing + sx, center + oy * spacing + sy, rng)
        )
    return plants


def _shape_field(plant: Plant, size: int) -> np.ndarray:
    """Lobed distance field on a grid padded by size//2 on each side; smaller is closer."""
    pad = size // 2
    coords = np.arange(size + 2 * pad, dtype=np.float64) - pad
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    dx, dy = xx - plant.cx, yy - plant.cy
    theta = np.arctan2(dy, dx)
    traits = SPECIES_TRAITS[plant.species]
    radius_scale = 1.0 + traits["lobe_amp"] * np.cos(traits["lobes"] * (theta - plant.rotation))
    return np.hypot(dx, dy) / radius_scale


class PlotRenderer:
    """Pixel growth order per plant; masks at any day are nested prefixes of that order."""

    def __init__(self, config: SynthConfig, plants: list[Plant]):
        self.config = config
        self.size = config.image_size
        self.pad = self.size // 2
        self.plants = plants
        self.fields = [_shape_field(p, self.size) for p in plants]
        self.orders = [np.argsort(f, axis=None, kind="stable") for f in self.fields]

    def masks(self, t: float) -> list[tuple[Plant, np.ndarray]]:
        """Visible masks per plant (earlier plants occlude later ones); empty plants are skipped."""
        size, pad = self.size, self.pad
        padded = size + 2 * pad
        occupied = np.zeros((size, size), dtype=bool)
        out = []
        for plant, order in zip(self.plants, self.orders):
            n = int(round(plant.area(t)))
            if n <= 0:
                continue
            rows, cols = np.unravel_index(order[:n], (padded, padded))
            rows, cols = rows - pad, cols - pad
            inside = (rows >= 0) & (rows < size) & (cols >= 0) & (cols < size)
            mask = np.zeros((size, size), dtype=bool)
            mask[rows[inside], cols[inside]] = True
            mask &= ~occupied
            occupied |= mask
            if mask.any():
                out.append((plant, mask))
        return out

    def render(self, masks: list[tuple[Plant, np.ndarray]], soil: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        image = soil.copy()
        size, pad = self.size, self.pad
        index = {id(p): i for i, p in enumerate(self.plants)}
        for plant, mask in masks:
            idx = index[id(plant)]
            dist = self.fields[idx][pad : pad + size, pad : pad + size]
            extent = max(math.sqrt(plant.area(1e6) / math.pi), 1.0)
            shade = 0.8 + 0.35 * np.clip(1.0 - dist / extent, 0.0, 1.0)
            color = np.array(SPECIES_TRAITS[plant.species]["color"], dtype=np.float64)
            leaf = shade[..., None] * color[None, None, :]
            image[mask] = leaf[mask]
        image += rng.normal(0.0, 3.0, size=image.shape)
        illumination = 1.0 - 0.15 * self.config.site_shift
        return np.clip(image * illumination, 0, 255).round().astype(np.uint8)


def soil_texture(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    size = config.image_size
    coarse = ndimage.gaussian_filter(rng.normal(size=(size, size)), sigma=size / 16, mode="wrap")
    coarse /= max(coarse.std(), 1e-8)
    fine = rng.normal(size=(size, size))
    base = SOIL_COLOR + config.site_shift * SITE_SOIL_SHIFT
    soil = base[None, None, :] * (1.0 + 0.08 * coarse[..., None]) + 4.0 * fine[..., None]
    return soil


def biomass_from_masks(config: SynthConfig, masks: list[tuple[Plant, np.ndarray]]) -> tuple[float, float]:
    """Allometric rule on visible species cover: bm = beta * (cover %)^exponent, t/ha."""
    image_area = config.image_size * config.image_size
    cover = {"sw": 0, "fb": 0}
    for plant, mask in masks:
        cover[plant.species] += int(mask.sum())
    sw, fb = (
        config.biomass_beta * (100.0 * cover[s] / image_area) ** config.allometry_exponent
        for s in ("sw", "fb")
    )
    return sw, fb


def expected_biomass(config: SynthConfig, treatment: Treatment, t: float) -> tuple[float, float]:
    """Process-based target: biomass of the nominal (un-jittered) plot of a treatment at day t."""
    renderer = PlotRenderer(config, layout(config, treatment, None))
    return biomass_from_masks(config, renderer.masks(t))


def split_for(index: int, config: SynthConfig) -> str:
    """Contiguous blocks of sequences per split."""
    n = config.n_sequences
    n_train = int(round(config.split_fractions[0] * n))
    n_val = int(round(config.split_fractions[1] * n))
    if index < n_train:
        return "train"
    if index < n_train + n_val:
        return "val"
    return "test"


def synth_generate(config: SynthConfig, out_dir: str | Path, *, progress: bool = True) -> Path:
    """Render images, masks, manifest, ground truth and treatment vocabulary; returns the manifest path."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.touch()
        probe.unlink()
    except OSError as e:
        raise OSError(f"Output directory is not writable: {out_dir} ({e})") from e

    vocab = default_vocabulary(config.n_treatments)
    times = config.times
    records: list[SequenceRecord] = []
    truth: list[GroundTruthRow] = []

    logger.info(
        f"Rendering {config.n_sequences} sequences x {len(times)} times at "
        f"{config.image_size}px into {out_dir}"
    )
    for index in tqdm(range(config.n_sequences), desc="synth", disable=not progress):
        sequence_id = f"seq{index:04d}"
        treatment = vocab[index % len(vocab)]
        rng = np.random.default_rng(derive_seed(config.seed, index))
        renderer = PlotRenderer(config, layout(config, treatment, rng))
        soil = soil_texture(config, rng)

        images: list[tuple[int, str]] = []
        biomass: dict[int, tuple[float, float]] = {}
        for t in times:
            masks = renderer.masks(t)
            pixels = renderer.render(masks, soil, rng)
            image_rel = f"images/{sequence_id}/t{t:03d}.png"
            mask_rel = f"masks/{sequence_id}/t{t:03d}.json"
            (out_dir / image_rel).parent.mkdir(parents=True, exist_ok=True)
            Image.fromarray(pixels).save(out_dir / image_rel)

            size = config.image_size
            instances = (
                InstanceMasks(
                    masks=np.stack([m for _, m in masks]),
                    scores=np.ones(len(masks)),
                    labels=[p.species for p, _ in masks],
                )
                if masks
                else InstanceMasks.empty(size, size)
            )
            write_masks_json(instances, out_dir / mask_rel)

            bm = biomass_from_masks(config, masks)
            center_px = sum(int(m.sum()) for p, m in masks if p.is_center)
            images.append((t, image_rel))
            biomass[t] = bm
            truth.append(
                GroundTruthRow(
                    sequence_id=sequence_id,
                    time=t,
                    pla_px=center_px,
                    masks=mask_rel,
                    bm_sw=bm[0],
                    bm_fb=bm[1],
                    cover_px=sum(int(m.sum()) for _, m in masks),
                )
            )
        records.append(
            SequenceRecord(
                sequence_id=sequence_id,
                images=images,
                treatment_id=treatment.id,
                biomass_by_time=biomass,
                split=split_for(index, config),
                root=out_dir,
            )
        )

    manifest_path = ManifestQueries.write(records, out_dir / "manifest.jsonl")
    GroundTruthQueries.write(truth, out_dir / "ground_truth.jsonl")
    GroundTruthQueries.write_treatments(vocab, out_dir / "treatments.json")
    with open(out_dir / "synth_config.json", "w", encoding="utf-8") as f:
        json.dump(config_to_dict(config), f, indent=2)
    logger.info(f"Synthetic dataset written: {manifest_path}")
    return manifest_path


def load_synth_config(dataset_dir: str | Path) -> SynthConfig | None:
    """Generator parameters stored next to a synthetic manifest, if any."""
    path = Path(dataset_dir) / "synth_config.json"
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as f:
        return build_dataclass(SynthConfig, json.load(f))
