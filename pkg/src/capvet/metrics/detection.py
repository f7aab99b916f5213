"""Detection metrics: per-class average precision (all-point or 11-point),
mAP, CorLoc, and an object-area breakdown.

Matching is greedy over detections ranked by score: a detection is a true
positive when its best IoU against unmatched ground truth of its class in
its image reaches the threshold; second matches to the same ground-truth
box are false positives; difficult boxes are ignored entirely.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..validation import ValidationError, check_box
from ..wsod import Detection, iou_matrix

logger = logging.getLogger(__name__)

# COCO-style area ranges in squared pixels.
AREA_RANGES = {
    "small": (0.0, 32.0**2),
    "medium": (32.0**2, 96.0**2),
    "large": (96.0**2, float("inf")),
}


@dataclass
class ImageGroundTruth:
    boxes: np.ndarray
    categories: list[str]
    difficult: list[bool] = field(default_factory=list)

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        for box in self.boxes:
            check_box(box)
        if len(self.categories) != len(self.boxes):
            raise ValidationError("one category per ground-truth box required")
        if not self.difficult:
            self.difficult = [False] * len(self.boxes)
        if len(self.difficult) != len(self.boxes):
            raise ValidationError("one difficult flag per box required")


DetectionGroundTruth = Mapping[str, ImageGroundTruth]


def _class_gt(gt: DetectionGroundTruth, category: str):
    """Per-image boxes, difficult flags, and matched markers for one class."""
    table = {}
    npos = 0
    for record_id, image_gt in gt.items():
        idx = [i for i, c in enumerate(image_gt.categories) if c == category]
        if not idx:
            continue
        boxes = image_gt.boxes[idx]
        difficult = [image_gt.difficult[i] for i in idx]
        npos += sum(1 for d in difficult if not d)
        table[record_id] = {"boxes": boxes, "difficult": difficult, "matched": [False] * len(idx)}
    return table, npos


def _pr_curve(
    detections: Sequence[Detection],
    gt: DetectionGroundTruth,
    category: str,
    iou_thresh: float,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Cumulative precision/recall arrays over score-ranked detections."""
    table, npos = _class_gt(gt, category)
    dets = [d for d in detections if d.category == category]
    order = np.argsort([-d.score for d in dets], kind="stable")
    tp = np.zeros(len(dets))
    fp = np.zeros(len(dets))
    for rank, di in enumerate(order):
        det = dets[di]
        entry = table.get(det.record_id)
        if entry is None or len(entry["boxes"]) == 0:
            fp[rank] = 1.0
            continue
        ious = iou_matrix(det.box, entry["boxes"])[0]
        best = int(np.argmax(ious))
        if ious[best] >= iou_thresh:
            if entry["difficult"][best]:
                continue
            if not entry["matched"][best]:
                entry["matched"][best] = True
                tp[rank] = 1.0
            else:
                fp[rank] = 1.0
        else:
            fp[rank] = 1.0
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(fp)
    recall = tp_cum / max(npos, 1)
    precision = tp_cum / np.maximum(tp_cum + fp_cum, np.finfo(np.float64).eps)
    return precision, recall, npos


def pr_curve(
    detections: Sequence[Detection],
    gt: DetectionGroundTruth,
    category: str,
    iou_thresh: float = 0.5,
) -> tuple[np.ndarray, np.ndarray]:
    """(recall, precision) arrays for one class, for plotting."""
    precision, recall, _ = _pr_curve(detections, gt, category, iou_thresh)
    return recall, precision


def ap_from_pr(precision: np.ndarray, recall: np.ndarray, method: str = "all_point") -> float:
    """Area under the precision-recall curve.

    all_point: precision envelope integrated over recall changes;
    eleven_point: mean of max precision at the 11 canonical recall levels.
    """
    if method == "eleven_point":
        ap = 0.0
        for t in np.arange(0.0, 1.1, 0.1):
            mask = recall >= t
            p = float(np.max(precision[mask])) if mask.any() else 0.0
            ap += p / 11.0
        return ap
    if method != "all_point":
        raise ValidationError(f"method must be all_point or eleven_point, got {method!r}")
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    changed = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[changed + 1] - mrec[changed]) * mpre[changed + 1]))


def average_precision(
    detections: Sequence[Detection],
    gt: DetectionGroundTruth,
    categories: Sequence[str],
    iou_thresh: float = 0.5,
    method: str = "all_point",
) -> tuple[dict[str, float], float]:
    """Per-class AP and their mean; classes without ground truth are
    excluded from the mean with a warning."""
    aps: dict[str, float] = {}
    for category in categories:
        _, npos = _class_gt(gt, category)
        if npos == 0:
            logger.warning("category %s has no ground truth; excluded from mAP", category)
            continue
        precision, recall, _ = _pr_curve(detections, gt, category, iou_thresh)
        aps[category] = ap_from_pr(precision, recall, method) if len(precision) else 0.0
    if not aps:
        raise ValidationError("no category has ground truth; mAP undefined")
    return aps, float(np.mean(list(aps.values())))


def ap_by_area(
    detections: Sequence[Detection],
    gt: DetectionGroundTruth,
    categories: Sequence[str],
    iou_thresh: float = 0.5,
    method: str = "all_point",
    ranges: Mapping[str, tuple[float, float]] = AREA_RANGES,
) -> dict[str, tuple[dict[str, float], float] | None]:
    """mAP restricted to small/medium/large objects.

    Out-of-range ground truth is marked difficult, so detections matching
    it are ignored rather than counted as false positives.
    """
    out: dict[str, tuple[dict[str, float], float] | None] = {}
    for name, (lo, hi) in ranges.items():
        filtered = {}
        for record_id, image_gt in gt.items():
            areas = (image_gt.boxes[:, 2] - image_gt.boxes[:, 0]) * (
                image_gt.boxes[:, 3] - image_gt.boxes[:, 1]
            )
            difficult = [
                bool(d or not (lo <= a < hi))
                for d, a in zip(image_gt.difficult, areas)
            ]
            filtered[record_id] = ImageGroundTruth(
                boxes=image_gt.boxes.copy(),
                categories=list(image_gt.categories),
                difficult=difficult,
            )
        try:
            out[name] = average_precision(detections, filtered, categories, iou_thresh, method)
        except ValidationError:
            out[name] = None
    return out


def corloc(
    top_boxes: Mapping[tuple[str, str], np.ndarray],
    gt: DetectionGroundTruth,
    iou_thresh: float = 0.5,
) -> tuple[dict[str, float], float]:
    """Fraction of class-containing images whose top-scored box overlaps
    any ground-truth box of that class at the threshold.

    top_boxes maps (record_id, category) to the model's highest-scored box;
    a missing entry counts as a miss. Classes in no image are excluded.
    """
    per_class_hits: dict[str, list[bool]] = {}
    for record_id, image_gt in gt.items():
        for category in set(image_gt.categories):
            idx = [i for i, c in enumerate(image_gt.categories) if c == category]
            boxes = image_gt.boxes[idx]
            top = top_boxes.get((record_id, category))
            hit = False
            if top is not None:
                hit = bool(np.max(iou_matrix(top, boxes)) >= iou_thresh)
            per_class_hits.setdefault(category, []).append(hit)
    if not per_class_hits:
        raise ValidationError("ground truth is empty; CorLoc undefined")
    per_class = {c: float(np.mean(hits)) for c, hits in sorted(per_class_hits.items())}
    return per_class, float(np.mean(list(per_class.values())))


def top_boxes_from_detections(detections: Sequence[Detection]) -> dict[tuple[str, str], np.ndarray]:
    """Highest-scored box per (image, class) for CorLoc."""
    best: dict[tuple[str, str], Detection] = {}
    for det in detections:
        key = (det.record_id, det.category)
        if key not in best or det.score > best[key].score:
            best[key] = det
    return {key: det.box for key, det in best.items()}
