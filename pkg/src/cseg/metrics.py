"""Semantic and panoptic segmentation metrics against panoptic ground truth.

The top-level pq/sq/rq are pooled over classes so that pq == sq * rq holds
exactly; the per-class table and the macro means cover the class-averaged
convention.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError
from .raster import IGNORE_CLASS, PanopticTruth


@dataclass
class ClassPQ:
    ious: list = field(default_factory=list)  # matched-pair IoUs
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def iou_sum(self) -> float:
        return math.fsum(self.ious)

    @property
    def sq(self) -> float:
        return self.iou_sum / self.tp if self.tp else 0.0

    @property
    def rq(self) -> float:
        denom = self.tp + 0.5 * self.fp + 0.5 * self.fn
        return self.tp / denom if denom else 0.0

    @property
    def pq(self) -> float:
        return self.sq * self.rq


@dataclass
class EvalReport:
    per_class_iou: dict = field(default_factory=dict)
    miou: float = float("nan")
    pq: float = 0.0
    sq: float = 0.0
    rq: float = 0.0
    per_class_pq: dict = field(default_factory=dict)  # class -> ClassPQ
    counts: dict = field(default_factory=dict)
    pq_macro: float = float("nan")
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_class_iou": {str(c): v for c, v in sorted(self.per_class_iou.items())},
            "miou": self.miou,
            "pq": self.pq,
            "sq": self.sq,
            "rq": self.rq,
            "pq_macro": self.pq_macro,
            "per_class_pq": {
                str(c): {"pq": s.pq, "sq": s.sq, "rq": s.rq,
                         "tp": s.tp, "fp": s.fp, "fn": s.fn}
                for c, s in sorted(self.per_class_pq.items())
            },
            "counts": dict(sorted(self.counts.items())),
            "timings": dict(sorted(self.timings.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        lines = ["class,iou,pq,sq,rq,tp,fp,fn"]
        classes = sorted(set(self.per_class_iou) | set(self.per_class_pq))
        for c in classes:
            iou = self.per_class_iou.get(c, "")
            s = self.per_class_pq.get(c, ClassPQ())
            lines.append(f"{c},{iou},{s.pq},{s.sq},{s.rq},{s.tp},{s.fp},{s.fn}")
        lines.append(
            f"all,{self.miou},{self.pq},{self.sq},{self.rq},"
            f"{self.counts.get('tp', 0)},{self.counts.get('fp', 0)},{self.counts.get('fn', 0)}"
        )
        return "\n".join(lines) + "\n"


def _check_aligned(arr: np.ndarray, truth: PanopticTruth, name: str) -> None:
    if arr.shape != (truth.height, truth.width):
        raise DimensionMismatchError(
            f"{name} shape {arr.shape} != truth {(truth.height, truth.width)}"
        )


def miou(pred: np.ndarray, truth: PanopticTruth):
    """Per-class intersection over union, ignoring IGNORE pixels; the mean
    runs over classes with nonzero union."""
    pred = np.asarray(pred)
    _check_aligned(pred, truth, "prediction")
    valid = truth.valid_mask()
    p = pred[valid].astype(np.int64)
    t = truth.class_ids[valid].astype(np.int64)
    classes = np.union1d(np.unique(p), np.unique(t))
    per_class = {}
    for c in classes.tolist():
        inter = int(((p == c) & (t == c)).sum())
        union = int(((p == c) | (t == c)).sum())
        if union > 0:
            per_class[c] = inter / union
    mean = math.fsum(per_class.values()) / len(per_class) if per_class else float("nan")
    return per_class, mean


def panoptic_quality(
    pred_class: np.ndarray,
    pred_instance: np.ndarray,
    truth: PanopticTruth,
    match_threshold: float = 0.5,
) -> EvalReport:
    """Segment matching at IoU > match_threshold; pooled PQ = SQ * RQ.

    Predicted segments with more than half their area on IGNORE pixels are
    dropped from false-positive counting.
    """
    pred_class = np.asarray(pred_class)
    pred_instance = np.asarray(pred_instance)
    _check_aligned(pred_class, truth, "class prediction")
    _check_aligned(pred_instance, truth, "instance prediction")

    valid = truth.valid_mask()
    shift = np.int64(max(int(pred_instance.max()), int(truth.instance_ids.max())) + 2)
    pred_key = pred_class.astype(np.int64) * shift + pred_instance.astype(np.int64)
    truth_key = truth.class_ids.astype(np.int64) * shift + truth.instance_ids.astype(np.int64)

    pred_segs, pred_area = np.unique(pred_key, return_counts=True)
    pred_area = dict(zip(pred_segs.tolist(), pred_area.tolist()))
    ignore_segs, ignore_area = np.unique(pred_key[~valid], return_counts=True)
    pred_ignore = dict(zip(ignore_segs.tolist(), ignore_area.tolist()))
    truth_segs, truth_area = np.unique(truth_key[valid], return_counts=True)
    truth_area = dict(zip(truth_segs.tolist(), truth_area.tolist()))

    pair_key = pred_key[valid] * (truth_key.max() + 2) + truth_key[valid]
    pairs, inter = np.unique(pair_key, return_counts=True)

    per_class = {}

    def stat(c) -> ClassPQ:
        return per_class.setdefault(int(c), ClassPQ())

    matched_pred, matched_truth = set(), set()
    for key, n_inter in zip(pairs.tolist(), inter.tolist()):
        p_seg, t_seg = divmod(key, int(truth_key.max() + 2))
        p_cls, t_cls = p_seg // shift, t_seg // shift
        if p_cls != t_cls:
            continue
        p_valid_area = pred_area[p_seg] - pred_ignore.get(p_seg, 0)
        iou = n_inter / (p_valid_area + truth_area[t_seg] - n_inter)
        if iou > match_threshold:
            matched_pred.add(p_seg)
            matched_truth.add(t_seg)
            s = stat(p_cls)
            s.tp += 1
            s.ious.append(iou)
    for t_seg in truth_area:
        if t_seg not in matched_truth:
            stat(t_seg // shift).fn += 1
    for p_seg, area in pred_area.items():
        if p_seg in matched_pred:
            continue
        if pred_ignore.get(p_seg, 0) / area > 0.5:
            continue
        stat(p_seg // shift).fp += 1

    tp = sum(s.tp for s in per_class.values())
    fp = sum(s.fp for s in per_class.values())
    fn = sum(s.fn for s in per_class.values())
    iou_total = math.fsum(iou for s in per_class.values() for iou in s.ious)
    sq = iou_total / tp if tp else 0.0
    denom = tp + 0.5 * fp + 0.5 * fn
    rq = tp / denom if denom else 0.0

    per_class_iou, mean_iou = miou(pred_class, truth)
    macro = (
        math.fsum(s.pq for s in per_class.values()) / len(per_class)
        if per_class
        else float("nan")
    )
    return EvalReport(
        per_class_iou=per_class_iou,
        miou=mean_iou,
        pq=sq * rq,
        sq=sq,
        rq=rq,
        per_class_pq=per_class,
        counts={"tp": tp, "fp": fp, "fn": fn},
        pq_macro=macro,
    )
