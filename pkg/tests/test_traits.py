import itertools

import numpy as np
import pytest
import torch

from cropsim.dataset.models import SequenceRecord
from cropsim.traits.biomass import (
    biomass_estimate,
    biomass_estimates,
    labelled_images,
    train_biomass_regressor,
)
from cropsim.traits.estimator import TraitEstimator
from cropsim.traits.evaluation import (
    IOU_THRESHOLDS,
    RECALL_THRESHOLDS,
    ap_ar,
    trait_mae_me,
    trait_mae_me_by_group,
)
from cropsim.traits.models import InstanceMasks, TraitEstimate
from cropsim.traits.pla import pla_from_masks, select_center_instance
from cropsim.utils.config import RegressorConfig


def _box_mask(height, width, top, left, h, w):
    mask = np.zeros((height, width), dtype=bool)
    mask[top : top + h, left : left + w] = True
    return mask


# ---- PLA ----


def test_pla_of_full_image_mask():
    masks = InstanceMasks(masks=np.ones((1, 256, 256), dtype=bool), scores=[1.0])
    est = pla_from_masks(masks, gsd_mm=0.23, image_size=(256, 256))
    assert est.pixel_count == 65536
    assert est.pla_mm2 == pytest.approx(65536 * 0.0529)
    assert est.pla_pct == pytest.approx(100.0)
    assert est.flags == []


def test_pla_without_plants_is_flagged():
    est = pla_from_masks(InstanceMasks.empty(32, 32), gsd_mm=1.0)
    assert est.flags == ["no-plant"]
    assert est.pla_mm2 == 0.0 and est.pla_pct == 0.0


def test_pla_input_checks():
    with pytest.raises(ValueError):
        pla_from_masks(InstanceMasks.empty(32, 32), gsd_mm=0.0)
    with pytest.raises(ValueError):
        pla_from_masks(InstanceMasks.empty(32, 32), gsd_mm=1.0, image_size=(64, 64))


def test_center_instance_prefers_highest_scoring_mask_on_center():
    masks = InstanceMasks(
        masks=np.stack(
            [
                _box_mask(32, 32, 10, 10, 12, 12),
                _box_mask(32, 32, 14, 14, 4, 4),
                _box_mask(32, 32, 0, 0, 4, 4),
            ]
        ),
        scores=[0.6, 0.9, 1.0],
    )
    assert select_center_instance(masks) == 1
    assert pla_from_masks(masks, gsd_mm=1.0).pixel_count == 16


def test_center_instance_falls_back_to_nearest_centroid():
    masks = InstanceMasks(
        masks=np.stack([_box_mask(32, 32, 0, 0, 4, 4), _box_mask(32, 32, 20, 20, 4, 4)]),
        scores=[1.0, 0.5],
    )
    assert select_center_instance(masks) == 1


def test_trait_estimate_validation():
    with pytest.raises(ValueError):
        TraitEstimate(kind="PLA", pla_pct=101.0)
    with pytest.raises(ValueError):
        TraitEstimate(kind="BM", bm_fb=-0.1)
    assert TraitEstimate(kind="BM", bm_sw=1.0, bm_fb=2.5).bm_total == 3.5


# ---- error statistics ----


def test_trait_mae_me():
    assert trait_mae_me([2, 4], [1, 5]) == (1.0, 0.0)
    assert trait_mae_me([1, 1], [2, 3]) == (1.5, -1.5)
    with pytest.raises(ValueError):
        trait_mae_me([1], [1, 2])
    with pytest.raises(ValueError):
        trait_mae_me([], [])


def test_trait_errors_by_composition_group():
    out = trait_mae_me_by_group([2, 4, 3], [1, 5, 1], ["mix", "mix", "sw"])
    assert out["overall"]["n"] == 3
    assert out["mixture"] == {"mae": 1.0, "me": 0.0, "n": 2}
    assert out["sw"] == {"mae": 2.0, "me": 2.0, "n": 1}
    assert "fb" not in out


# ---- AP / AR ----


def _three_plants():
    return [
        _box_mask(64, 64, 2, 2, 10, 10),
        _box_mask(64, 64, 30, 5, 8, 20),
        _box_mask(64, 64, 40, 40, 15, 15),
    ]


def test_perfect_predictions_score_one():
    truth = InstanceMasks(masks=np.stack(_three_plants()), scores=np.ones(3))
    pred = InstanceMasks(masks=np.stack(_three_plants()), scores=[0.9, 0.8, 0.7])
    result = ap_ar([pred], [truth])
    for kind in ("bbox", "segm"):
        assert result[kind]["AP"] == pytest.approx(1.0)
        assert result[kind]["AP50"] == pytest.approx(1.0)
        assert result[kind]["AR"] == pytest.approx(1.0)


def test_low_scoring_false_positive_keeps_ap():
    truth = InstanceMasks(masks=np.stack(_three_plants()), scores=np.ones(3))
    extra = _box_mask(64, 64, 50, 2, 6, 6)
    pred = InstanceMasks(masks=np.stack([*_three_plants(), extra]), scores=[0.9, 0.8, 0.7, 0.1])
    assert ap_ar([pred], [truth])["segm"]["AP"] == pytest.approx(1.0)


def test_missed_plant_caps_recall():
    truth = InstanceMasks(masks=np.stack(_three_plants()), scores=np.ones(3))
    pred = InstanceMasks(masks=np.stack(_three_plants()[:2]), scores=[0.9, 0.8])
    result = ap_ar([pred], [truth])["segm"]
    assert result["AR"] == pytest.approx(2 / 3)
    assert result["AP"] == pytest.approx(67 / 101)


def test_ap_requires_ground_truth():
    with pytest.raises(ValueError):
        ap_ar([InstanceMasks.empty(8, 8)], [InstanceMasks.empty(8, 8)])


def test_empty_predictions_score_zero():
    truth = InstanceMasks(masks=np.stack(_three_plants()), scores=np.ones(3))
    result = ap_ar([InstanceMasks.empty(64, 64)], [truth])
    for kind in ("bbox", "segm"):
        assert result[kind] == {"AP": 0.0, "AP50": 0.0, "AP75": 0.0, "AR": 0.0}


def _rect_iou(a, b):
    """Rectangles as (top, left, h, w) in whole pixels."""
    ih = min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0])
    iw = min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1])
    if ih <= 0 or iw <= 0:
        return 0.0
    inter = ih * iw
    return inter / (a[2] * a[3] + b[2] * b[3] - inter)


def _random_scene(rng, size=64):
    # one plant per 20-px band, 2-px gaps between bands so plants never touch
    truths = []
    for band in range(3):
        h, w = int(rng.integers(6, 21)), int(rng.integers(6, 19))
        top, left = int(rng.integers(0, size - h + 1)), band * 22 + int(rng.integers(0, 20 - w + 1))
        truths.append((top, left, h, w))

    def jitter(rect):
        h = int(np.clip(rect[2] + rng.integers(-3, 4), 3, size))
        w = int(np.clip(rect[3] + rng.integers(-3, 4), 3, size))
        top = int(np.clip(rect[0] + rng.integers(-3, 4), 0, size - h))
        left = int(np.clip(rect[1] + rng.integers(-3, 4), 0, size - w))
        return (top, left, h, w)

    preds = [jitter(t) for t in truths if rng.random() < 0.8]
    preds += [jitter(t) for t in truths if rng.random() < 0.3]
    for _ in range(int(rng.integers(0, 3))):
        h, w = int(rng.integers(3, 16)), int(rng.integers(3, 16))
        preds.append((int(rng.integers(0, size - h + 1)), int(rng.integers(0, size - w + 1)), h, w))
    scores = rng.uniform(0.05, 1.0, len(preds))
    return truths, preds, scores


def _exhaustive_tp(ious, threshold):
    """Try every one-to-one assignment; keep the best true-positive pattern in score order."""
    n_pred, n_truth = ious.shape
    best = (False,) * n_pred
    for choice in itertools.product(range(-1, n_pred), repeat=n_truth):
        taken = [d for d in choice if d >= 0]
        if len(taken) != len(set(taken)):
            continue
        if any(d >= 0 and ious[d, g] < threshold for g, d in enumerate(choice)):
            continue
        tp = tuple(d in taken for d in range(n_pred))
        best = max(best, tp)
    return best


def _reference_ap_ar(truths, preds, scores):
    order = np.argsort(-scores, kind="mergesort")
    ious = np.array([[_rect_iou(preds[d], t) for t in truths] for d in order])
    ious = ious.reshape(len(preds), len(truths))
    aps, ars = [], []
    for threshold in IOU_THRESHOLDS:
        tp = _exhaustive_tp(ious, threshold)
        hits = np.cumsum(tp)
        recall = [h / len(truths) for h in hits]
        precision = [h / (k + 1) for k, h in enumerate(hits)]
        curve = [
            max((p for p, r in zip(precision, recall) if r >= level), default=0.0)
            for level in RECALL_THRESHOLDS
        ]
        aps.append(float(np.mean(curve)) if len(preds) else 0.0)
        ars.append(float(recall[-1]) if len(preds) else 0.0)
    return {"AP50": aps[0], "AP75": aps[5], "AR": float(np.mean(ars))}


def test_ap_ar_matches_exhaustive_assignment_on_random_scenes():
    rng = np.random.default_rng(0)
    for _ in range(100):
        truths, preds, scores = _random_scene(rng)
        truth_masks = np.stack([_box_mask(64, 64, *t) for t in truths])
        truth = InstanceMasks(masks=truth_masks, scores=np.ones(3))
        if preds:
            masks = np.stack([_box_mask(64, 64, *p) for p in preds])
        else:
            masks = np.zeros((0, 64, 64), dtype=bool)
        result = ap_ar([InstanceMasks(masks=masks, scores=scores)], [truth])
        expected = _reference_ap_ar(truths, preds, scores)
        for kind in ("bbox", "segm"):
            assert {key: result[kind][key] for key in expected} == expected


# ---- biomass ----


def test_regressor_fits_constant_label():
    torch.manual_seed(0)
    images = torch.rand(8, 3, 32, 32) * 2 - 1
    labels = torch.tensor([[1.5, 0.5]]).repeat(8, 1)
    config = RegressorConfig(epochs=2, batch_size=4, patience=2)
    regressor, history = train_biomass_regressor(images, labels, config)
    preds = biomass_estimates(images, regressor)
    assert all(p.bm_sw == pytest.approx(1.5, abs=1e-5) for p in preds)
    assert all(p.bm_fb == pytest.approx(0.5, abs=1e-5) for p in preds)
    assert history.best_epoch >= 1
    assert history.val_metrics["sw"]["mae"] == pytest.approx(0.0, abs=1e-5)
    single = biomass_estimate(images[0], regressor)
    assert single.kind == "BM"
    assert single.bm_sw == pytest.approx(preds[0].bm_sw, abs=1e-6)


def test_labelled_images_require_labels(tiny_records):
    from cropsim.dataset.sampling import ImageCache

    record = tiny_records[0]
    x, y = labelled_images([record], ImageCache([record], 32))
    assert x.shape == (4, 3, 32, 32) and y.shape == (4, 2)

    unlabelled = SequenceRecord(
        sequence_id="u",
        images=[(t, rel) for t, rel in record.images],
        treatment_id=0,
        biomass_by_time={},
        split="train",
        root=record.root,
    )
    with pytest.raises(ValueError):
        labelled_images([unlabelled], ImageCache([unlabelled], 32))


def test_estimator_without_regressor_reports_pla_only():
    estimator = TraitEstimator()
    images = -torch.ones(2, 3, 32, 32)
    values = estimator.values(images)
    assert set(values) == {"pla_pct"}
    assert values["pla_pct"] == [0.0, 0.0]
    assert estimator.stats["no_plant"] == 2
    assert estimator.biomass(images) is None
    assert estimator.trait_keys == ("pla_pct",)
