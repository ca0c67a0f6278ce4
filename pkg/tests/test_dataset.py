import json
from collections import Counter

import pytest
import torch

from cropsim.dataset import ManifestError, load_manifest, write_manifest
from cropsim.dataset.augmentation import augment, shadow_out
from cropsim.dataset.models import ConditionSet, SamplePair, SequenceRecord
from cropsim.dataset.queries import ManifestQueries
from cropsim.dataset.sampling import (
    ImageCache,
    PairDataset,
    collate_pairs,
    compute_biomass_stats,
    plan_epoch,
    sample_epoch,
)
from cropsim.utils.config import AugmentConfig


def _row(seq, t, treatment=0, split="train", bm=(1.0, 2.0)):
    return {
        "sequence_id": seq,
        "time": t,
        "image": f"images/{seq}/t{t:03d}.png",
        "treatment": treatment,
        "bm_sw": bm[0] if bm else None,
        "bm_fb": bm[1] if bm else None,
        "split": split,
    }


def _write(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    return path


def _record(seq, times, treatment=0):
    return SequenceRecord(
        sequence_id=seq,
        images=[(t, f"{seq}/{t}.png") for t in times],
        treatment_id=treatment,
        biomass_by_time={t: (float(t), 0.0) for t in times},
        split="train",
    )


# ---- manifest ----


def test_manifest_groups_and_sorts_by_time(tmp_path):
    path = _write(tmp_path / "m.jsonl", [_row("a", 30), _row("a", 10), _row("b", 5, treatment=2)])
    records = load_manifest(path)
    assert [r.sequence_id for r in records] == ["a", "b"]
    assert records[0].times == [10, 30]
    assert records[1].treatment_id == 2
    assert records[0].image_path(10) == tmp_path / "images/a/t010.png"


def test_manifest_write_then_load(tmp_path):
    path = _write(tmp_path / "m.jsonl", [_row("a", 10), _row("a", 20, bm=None)])
    records = load_manifest(path)
    copy = write_manifest(records, tmp_path / "copy" / "m.jsonl")
    again = load_manifest(copy)
    assert again[0].images == records[0].images
    assert again[0].biomass_by_time == {10: (1.0, 2.0)}


@pytest.mark.parametrize(
    "rows, message",
    [
        ([_row("a", 10), _row("a", 10)], "duplicate time"),
        ([_row("a", 10), _row("a", 20, treatment=1)], "treatment"),
        ([_row("a", 10), _row("a", 20, split="test")], "split"),
    ],
)
def test_manifest_consistency_errors(tmp_path, rows, message):
    path = _write(tmp_path / "m.jsonl", rows)
    with pytest.raises(ManifestError, match=message):
        load_manifest(path)


def test_manifest_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text(json.dumps(_row("a", 10)) + "\n{not json\n")
    with pytest.raises(ManifestError) as excinfo:
        load_manifest(path)
    assert excinfo.value.line == 2


def test_manifest_rejects_fractional_time(tmp_path):
    row = _row("a", 10)
    row["time"] = 10.5
    with pytest.raises(ManifestError):
        load_manifest(_write(tmp_path / "m.jsonl", [row]))


def test_manifest_require_biomass(tmp_path):
    path = _write(tmp_path / "m.jsonl", [_row("a", 10), _row("a", 20, bm=None)])
    assert len(load_manifest(path)) == 1
    with pytest.raises(ManifestError, match="missing biomass"):
        load_manifest(path, require_biomass=True)


def test_manifest_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_manifest(tmp_path / "missing.jsonl")


# ---- conditions ----


def test_condition_set_validation_and_scaling():
    with pytest.raises(ValueError):
        ConditionSet(t=10, b=(1.0, -0.1))
    with pytest.raises(ValueError):
        ConditionSet(t=10, c=-1)
    y = ConditionSet(t=10, c=1, b=(2.0, 4.0))
    assert y.scaled_biomass(100, 100) == y
    assert y.scaled_biomass(50, 150).b == (1.0, 6.0)
    assert y.restrict(("t",)) == ConditionSet(t=10)


def test_biomass_stats_replace_zero_std():
    records = [_record("a", [10, 20])]
    mean, std = compute_biomass_stats(records)
    assert mean == [15.0, 0.0]
    assert std == [5.0, 1.0]


# ---- sampling ----


def test_plan_uses_every_image_once_as_input(tiny_records):
    train = ManifestQueries.by_split(tiny_records, "train")
    plan = plan_epoch(train, rng_seed=3)
    inputs = Counter((p.sequence_id, p.t_in) for p in plan)
    expected = {(r.sequence_id, t) for r in train for t in r.times}
    assert set(inputs) == expected
    assert all(n == 1 for n in inputs.values())
    times = {r.sequence_id: set(r.times) for r in train}
    assert all(p.t_ref in times[p.sequence_id] for p in plan)


def test_plan_is_seeded():
    records = [_record("a", [1, 2, 3]), _record("b", [1, 5])]
    assert plan_epoch(records, 7) == plan_epoch(records, 7)


def test_plan_without_self_pairs():
    records = [_record("a", [1, 2, 3]), _record("b", [1, 5])]
    plan = plan_epoch(records, 0, allow_self=False)
    assert all(p.t_ref != p.t_in for p in plan)
    with pytest.raises(ValueError):
        plan_epoch([_record("c", [4])], 0, allow_self=False)


def test_plan_rejects_empty_set():
    with pytest.raises(ValueError):
        plan_epoch([], 0)


def test_pairs_keep_treatment_and_sequence(tiny_records):
    train = ManifestQueries.by_split(tiny_records, "train")
    plan = plan_epoch(train, rng_seed=1)
    dataset = PairDataset(train, plan, cache=ImageCache(train, 32))
    batch = collate_pairs([dataset[i] for i in range(len(dataset))])
    assert batch.x_in.shape == (len(plan), 3, 32, 32)
    for entry, y_in, y_gen, seq in zip(plan, batch.y_in, batch.y_gen, batch.sequence_ids):
        assert seq == entry.sequence_id
        assert y_in.c == y_gen.c
        assert (y_in.t, y_gen.t) == (entry.t_in, entry.t_ref)
        assert y_gen.b is not None
    assert batch.x_in.min() >= -1.0 and batch.x_in.max() <= 1.0


def test_sample_epoch_streams_the_plan(tiny_records):
    train = ManifestQueries.by_split(tiny_records, "train")[:2]
    plan = plan_epoch(train, rng_seed=5)
    pairs = list(sample_epoch(train, 5, image_size=32))
    assert len(pairs) == len(plan)
    for entry, pair in zip(plan, pairs):
        assert pair.sequence_id == entry.sequence_id
        assert (pair.y_in.t, pair.y_gen.t) == (entry.t_in, entry.t_ref)
        assert pair.x_in.shape == pair.x_ref.shape == (3, 32, 32)


# ---- augmentation ----


def _pair(x_in, x_ref):
    return SamplePair(
        x_in=x_in, x_ref=x_ref, y_in=ConditionSet(t=1), y_gen=ConditionSet(t=2), sequence_id="a"
    )


def test_disabled_augmentation_is_identity():
    x = torch.rand(3, 32, 32) * 2 - 1
    pair = _pair(x, x.clone())
    out = augment(pair, 0, AugmentConfig.disabled())
    assert torch.equal(out.x_in, pair.x_in)
    assert torch.equal(out.x_ref, pair.x_ref)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_augmentation_applies_the_same_transform_to_both_images(seed):
    x = torch.rand(3, 32, 32) * 2 - 1
    config = AugmentConfig(
        p_hflip=1.0, p_vflip=1.0, p_rot90=1.0, p_translate=1.0, max_translate=0.1, p_shadowout=1.0
    )
    out = augment(_pair(x, x.clone()), seed, config)
    assert torch.equal(out.x_in, out.x_ref)
    assert not torch.equal(out.x_in, x)
    assert out.y_in == ConditionSet(t=1)


def test_augmentation_is_seeded():
    x = torch.rand(3, 32, 32) * 2 - 1
    y = torch.rand(3, 32, 32) * 2 - 1
    config = AugmentConfig()
    a = augment(_pair(x, y), 5, config)
    b = augment(_pair(x, y), 5, config)
    assert torch.equal(a.x_in, b.x_in) and torch.equal(a.x_ref, b.x_ref)


def test_shadow_out_blends_only_the_box():
    x = torch.ones(3, 8, 8)
    out = shadow_out(x, (2, 3, 2, 4), alpha=0.5, fill=-1.0)
    assert torch.allclose(out[:, 2:4, 3:7], torch.zeros(3, 2, 4))
    assert out.sum() == x.sum() - 3 * 2 * 4
