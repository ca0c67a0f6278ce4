"""
cropsim/traits/evaluation.py
Trait error statistics and COCO-style AP/AR for instance masks and boxes
"""

from collections.abc import Sequence

import numpy as np
from pycocotools import mask as mask_utils

from cropsim.traits.models import InstanceMasks

IOU_THRESHOLDS = np.linspace(0.5, 0.95, 10)
RECALL_THRESHOLDS = np.linspace(0.0, 1.0, 101)


def trait_mae_me(gen: Sequence[float], ref: Sequence[float]) -> tuple[float, float]:
    """MAE = mean |gen - ref|, ME = mean (gen - ref); negative ME means underestimation."""
    gen_arr = np.asarray(gen, dtype=np.float64)
    ref_arr = np.asarray(ref, dtype=np.float64)
    if gen_arr.shape != ref_arr.shape:
        raise ValueError(f"trait lists differ in length: {len(gen_arr)} vs {len(ref_arr)}")
    if gen_arr.size == 0:
        raise ValueError("trait lists are empty")
    diff = gen_arr - ref_arr
    return float(np.abs(diff).mean()), float(diff.mean())


def trait_mae_me_by_group(
    gen: Sequence[float], ref: Sequence[float], groups: Sequence[str]
) -> dict[str, dict[str, float]]:
    """MAE/ME overall and per composition group (mix, sw, fb); 'mixture' aliases 'mix'."""
    if not (len(gen) == len(ref) == len(groups)):
        raise ValueError("gen, ref and groups must have equal lengths")
    out = {}
    if len(gen):
        mae, me = trait_mae_me(gen, ref)
        out["overall"] = {"mae": mae, "me": me, "n": len(gen)}
    for group in sorted(set(groups)):
        idx = [i for i, g in enumerate(groups) if g == group]
        mae, me = trait_mae_me([gen[i] for i in idx], [ref[i] for i in idx])
        key = "mixture" if group == "mix" else group
        out[key] = {"mae": mae, "me": me, "n": len(idx)}
    return out


def regression_metrics(pred: np.ndarray, true: np.ndarray) -> dict[str, float]:
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    mae, me = trait_mae_me(pred, true)
    ss_res = float(((true - pred) ** 2).sum())
    ss_tot = float(((true - true.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return {"mae": mae, "me": me, "r2": r2}


def _ious(pred: InstanceMasks, truth: InstanceMasks, kind: str) -> np.ndarray:
    if len(pred) == 0 or len(truth) == 0:
        return np.zeros((len(pred), len(truth)))
    crowd = [0] * len(truth)
    if kind == "segm":
        ious = mask_utils.iou(pred.rles(), truth.rles(), crowd)
    else:
        ious = mask_utils.iou(pred.boxes.tolist(), truth.boxes.tolist(), crowd)
    return np.asarray(ious, dtype=np.float64).reshape(len(pred), len(truth))


def _match(ious: np.ndarray, scores: np.ndarray, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """Greedy by descending score; each detection takes the best-IoU unmatched truth."""
    order = np.argsort(-scores, kind="mergesort")
    matched_gt = np.zeros(ious.shape[1], dtype=bool)
    tp = np.zeros(len(order), dtype=bool)
    for rank, d in enumerate(order):
        best, best_iou = -1, min(threshold, 1 - 1e-10)
        for g in range(ious.shape[1]):
            if matched_gt[g] or ious[d, g] < best_iou:
                continue
            best, best_iou = g, ious[d, g]
        if best >= 0:
            matched_gt[best] = True
            tp[rank] = True
    return scores[order], tp


def precision_recall_ap(scores: np.ndarray, tp: np.ndarray, n_truth: int) -> tuple[float, float]:
    """101-point interpolated AP and final recall."""
    if len(scores) == 0:
        return 0.0, 0.0
    order = np.argsort(-scores, kind="mergesort")
    tp = tp[order].astype(np.float64)
    tp_sum = np.cumsum(tp)
    fp_sum = np.cumsum(1.0 - tp)
    recall = tp_sum / n_truth
    precision = tp_sum / np.maximum(tp_sum + fp_sum, np.finfo(np.float64).eps)
    for i in range(len(precision) - 1, 0, -1):
        precision[i - 1] = max(precision[i - 1], precision[i])
    q = np.zeros(len(RECALL_THRESHOLDS))
    inds = np.searchsorted(recall, RECALL_THRESHOLDS, side="left")
    for ri, pi in enumerate(inds):
        if pi < len(precision):
            q[ri] = precision[pi]
    return float(q.mean()), float(recall[-1])


def ap_ar(
    preds: Sequence[InstanceMasks], truths: Sequence[InstanceMasks]
) -> dict[str, dict[str, float]]:
    """Class-agnostic AP (0.50:0.05:0.95), AP50, AP75 and AR for boxes ('bbox') and masks ('segm')."""
    if len(preds) != len(truths):
        raise ValueError("one prediction set per image is required")
    n_truth = sum(len(t) for t in truths)
    if n_truth == 0:
        raise ValueError("AP/AR need at least one ground-truth instance")

    results = {}
    for kind in ("bbox", "segm"):
        ious = [_ious(p, t, kind) for p, t in zip(preds, truths)]
        aps, ars = [], []
        for threshold in IOU_THRESHOLDS:
            all_scores, all_tp = [], []
            for pred, iou in zip(preds, ious):
                scores, tp = _match(iou, pred.scores, threshold)
                all_scores.append(scores)
                all_tp.append(tp)
            ap, ar = precision_recall_ap(np.concatenate(all_scores), np.concatenate(all_tp), n_truth)
            aps.append(ap)
            ars.append(ar)
        results[kind] = {
            "AP": float(np.mean(aps)),
            "AP50": aps[0],
            "AP75": aps[5],
            "AR": float(np.mean(ars)),
        }
    return results
