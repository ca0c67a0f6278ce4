"""
cropsim/dataset/sampling.py
Input/reference pair sampling: every training image is an input once per epoch,
its reference is a uniformly drawn image of the same sequence (itself included)
"""

import logging
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np
import torch
from torch.utils.data import Dataset

from cropsim.dataset.augmentation import augment
from cropsim.dataset.models import ConditionSet, SamplePair, SequenceRecord
from cropsim.utils.config import AugmentConfig
from cropsim.utils.image_io import load_image
from cropsim.utils.seeding import derive_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairIndex:
    sequence_id: str
    t_in: int
    t_ref: int

    @property
    def delta_t(self) -> int:
        return self.t_ref - self.t_in


@dataclass
class PairBatch:
    x_in: torch.Tensor
    x_ref: torch.Tensor
    y_in: list[ConditionSet]
    y_gen: list[ConditionSet]
    sequence_ids: list[str]

    def __len__(self) -> int:
        return self.x_in.shape[0]

    def to(self, device: torch.device | str, dtype: torch.dtype | None = None) -> "PairBatch":
        return PairBatch(
            x_in=self.x_in.to(device=device, dtype=dtype or self.x_in.dtype),
            x_ref=self.x_ref.to(device=device, dtype=dtype or self.x_ref.dtype),
            y_in=self.y_in,
            y_gen=self.y_gen,
            sequence_ids=self.sequence_ids,
        )


def condition_for(record: SequenceRecord, time: int) -> ConditionSet:
    return ConditionSet(t=time, c=record.treatment_id, b=record.biomass(time))


def compute_biomass_stats(records: list[SequenceRecord]) -> tuple[list[float], list[float]]:
    """Per-species mean/std of biomass over all labelled images; a zero std becomes 1."""
    values = np.array(
        [bm for r in records for t in r.times if (bm := r.biomass(t)) is not None], dtype=np.float64
    )
    if values.size == 0:
        return [0.0, 0.0], [1.0, 1.0]
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    std[std <= 0] = 1.0
    return mean.tolist(), std.tolist()


def plan_epoch(
    records: list[SequenceRecord], rng_seed: int, *, allow_self: bool = True
) -> list[PairIndex]:
    """Seeded pair plan for one epoch."""
    items = [(r, t) for r in records for t in r.times]
    if not items:
        raise ValueError("cannot sample pairs from an empty training set")
    min_images = 1 if allow_self else 2
    short = [r.sequence_id for r in records if len(r.images) < min_images]
    if short:
        raise ValueError(f"sequences need >= {min_images} images for pairing: {short[:5]}")

    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(len(items))
    plan = []
    for idx in order:
        record, t_in = items[idx]
        times = record.times
        if allow_self:
            t_ref = times[int(rng.integers(len(times)))]
        else:
            others = [t for t in times if t != t_in]
            t_ref = others[int(rng.integers(len(others)))]
        plan.append(PairIndex(record.sequence_id, t_in, t_ref))
    return plan


class ImageCache:
    """Decoded images keyed by (sequence_id, time); synthetic toy sets fit in memory."""

    def __init__(self, records: list[SequenceRecord], image_size: int | None = None):
        self.records = {r.sequence_id: r for r in records}
        self.image_size = image_size
        self._cache: dict[tuple[str, int], torch.Tensor] = {}

    def get(self, sequence_id: str, time: int) -> torch.Tensor:
        key = (sequence_id, time)
        if key not in self._cache:
            path = self.records[sequence_id].image_path(time)
            self._cache[key] = load_image(path, self.image_size)
        return self._cache[key]


class PairDataset(Dataset):
    def __init__(
        self,
        records: list[SequenceRecord],
        plan: list[PairIndex],
        *,
        cache: ImageCache | None = None,
        image_size: int | None = None,
        augment_config: AugmentConfig | None = None,
        seed: int = 0,
    ):
        self.records = {r.sequence_id: r for r in records}
        self.plan = plan
        self.cache = cache or ImageCache(records, image_size)
        self.augment_config = augment_config
        self.seed = seed

    def __len__(self) -> int:
        return len(self.plan)

    def __getitem__(self, index: int) -> SamplePair:
        entry = self.plan[index]
        record = self.records[entry.sequence_id]
        pair = SamplePair(
            x_in=self.cache.get(entry.sequence_id, entry.t_in),
            x_ref=self.cache.get(entry.sequence_id, entry.t_ref),
            y_in=condition_for(record, entry.t_in),
            y_gen=condition_for(record, entry.t_ref),
            sequence_id=entry.sequence_id,
        )
        if self.augment_config is not None:
            pair = augment(pair, derive_seed(self.seed, index), self.augment_config)
        return pair


def collate_pairs(pairs: list[SamplePair]) -> PairBatch:
    return PairBatch(
        x_in=torch.stack([p.x_in for p in pairs]),
        x_ref=torch.stack([p.x_ref for p in pairs]),
        y_in=[p.y_in for p in pairs],
        y_gen=[p.y_gen for p in pairs],
        sequence_ids=[p.sequence_id for p in pairs],
    )


def sample_epoch(
    records: list[SequenceRecord],
    rng_seed: int,
    *,
    image_size: int | None = None,
    augment_config: AugmentConfig | None = None,
    allow_self: bool = True,
) -> Iterator[SamplePair]:
    """Stream the epoch's pairs in plan order; images are decoded lazily."""
    plan = plan_epoch(records, rng_seed, allow_self=allow_self)
    dataset = PairDataset(
        records, plan, image_size=image_size, augment_config=augment_config, seed=rng_seed
    )
    for i in range(len(dataset)):
        yield dataset[i]
