"""Detection metrics: IoU, greedy matching, COCO-style AP / mAP.

Average precision uses the COCO convention: 101-point interpolated
precision, greedy score-ordered matching with at most one match per
ground-truth box, and mAP averaged over IoU thresholds 0.50:0.05:0.95.
Sorting is stable, so results are reproducible bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ValidationError

COCO_THRESHOLDS = tuple(np.round(np.arange(0.50, 0.96, 0.05), 2))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)


@dataclass
class Detection:
    image_id: str
    box: tuple  # (x1, y1, x2, y2) pixels
    score: float
    class_id: int = 0

    def __post_init__(self):
        x1, y1, x2, y2 = self.box
        if not (x2 > x1 and y2 > y1):
            raise ValidationError(f"degenerate box {self.box} on image {self.image_id}")


@dataclass
class GroundTruth:
    image_id: str
    box: tuple
    class_id: int = 0

    def __post_init__(self):
        x1, y1, x2, y2 = self.box
        if not (x2 > x1 and y2 > y1):
            raise ValidationError(f"degenerate box {self.box} on image {self.image_id}")


@dataclass
class EvalReport:
    mean_ap: float
    ap50: float
    per_threshold: dict  # iou threshold -> AP
    counts_at_50: dict  # {"tp": ..., "fp": ..., "fn": ...}
    degenerate: bool = False  # true when there were no gts and no detections

    def to_dict(self):
        return {
            "mAP": self.mean_ap,
            "mAP50": self.ap50,
            "per_threshold": {f"{t:.2f}": v for t, v in self.per_threshold.items()},
            "counts_at_50": self.counts_at_50,
            "degenerate": self.degenerate,
        }


def iou(a, b):
    """Intersection-over-union of two (x1, y1, x2, y2) boxes."""
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


def match_greedy(dets, gts, iou_thresh):
    """Greedy matching for one image.

    Detections are visited in descending score (stable on ties); each takes
    the highest-IoU unmatched ground truth with IoU >= threshold.  Returns
    one bool TP flag per detection in score order, plus that order.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken = [False] * len(gts)
    tp = []
    for i in order:
        best, best_iou = -1, -1.0
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            v = iou(dets[i].box, gt.box)
            if v >= iou_thresh and v > best_iou:
                best, best_iou = j, v
        if best >= 0:
            taken[best] = True
            tp.append(True)
        else:
            tp.append(False)
    return tp, order


def average_precision(dets, gts, iou_thresh):
    """101-point interpolated AP for a single class over many images."""
    n_gt = len(gts)
    if n_gt == 0:
        return 0.0
    by_image = {}
    for gt in gts:
        by_image.setdefault(gt.image_id, []).append(gt)

    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken = {img: [False] * len(g) for img, g in by_image.items()}
    tp_flags = []
    for i in order:
        det = dets[i]
        img_gts = by_image.get(det.image_id, [])
        img_taken = taken.get(det.image_id, [])
        best, best_iou = -1, -1.0
        for j, gt in enumerate(img_gts):
            if img_taken[j]:
                continue
            v = iou(det.box, gt.box)
            if v >= iou_thresh and v > best_iou:
                best, best_iou = j, v
        if best >= 0:
            img_taken[best] = True
            tp_flags.append(1.0)
        else:
            tp_flags.append(0.0)

    if not tp_flags:
        return 0.0
    tp = np.cumsum(tp_flags)
    fp = np.cumsum(1.0 - np.asarray(tp_flags))
    recall = tp / n_gt
    precision = tp / (tp + fp)
    # precision envelope: max precision at recall >= r
    env = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    for r in RECALL_POINTS:
        idx = np.searchsorted(recall, r, side="left")
        ap += env[idx] if idx < len(env) else 0.0
    return float(ap / len(RECALL_POINTS))


def _counts_at(dets, gts, iou_thresh):
    by_image = {}
    for gt in gts:
        by_image.setdefault(gt.image_id, []).append(gt)
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken = {img: [False] * len(g) for img, g in by_image.items()}
    tp = 0
    for i in order:
        det = dets[i]
        img_gts = by_image.get(det.image_id, [])
        img_taken = taken.get(det.image_id, [])
        best, best_iou = -1, -1.0
        for j, gt in enumerate(img_gts):
            if img_taken[j]:
                continue
            v = iou(det.box, gt.box)
            if v >= iou_thresh and v > best_iou:
                best, best_iou = j, v
        if best >= 0:
            img_taken[best] = True
            tp += 1
    return {"tp": tp, "fp": len(dets) - tp, "fn": len(gts) - tp}


def evaluate(dets, gts, image_ids=None):
    """COCO-style report: per-threshold AP, mAP, mAP50 and counts at 0.5.

    ``image_ids``, when given, pins the evaluated image universe: records
    referencing an unknown image are a validation error.  Without it the
    universe is the union of both sets, and zero-gt images contribute FPs.
    """
    if image_ids is not None:
        universe = set(image_ids)
        for d in dets:
            if d.image_id not in universe:
                raise ValidationError(f"detection references unknown image {d.image_id!r}")
        for g in gts:
            if g.image_id not in universe:
                raise ValidationError(f"ground truth references unknown image {g.image_id!r}")
    per = {t: average_precision(dets, gts, t) for t in COCO_THRESHOLDS}
    degenerate = not dets and not gts
    return EvalReport(
        mean_ap=float(np.mean(list(per.values()))) if per else 0.0,
        ap50=per[COCO_THRESHOLDS[0]],
        per_threshold=per,
        counts_at_50=_counts_at(dets, gts, 0.5),
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# JSONL interchange


def read_detections_jsonl(path):
    dets = []
    with open(path) as f:
        for i, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                dets.append(
                    Detection(
                        image_id=str(rec["image_id"]),
                        box=tuple(float(v) for v in rec["bbox"]),
                        score=float(rec["score"]),
                        class_id=int(rec.get("class", 0)),
                    )
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
                raise FormatError(f"{path}:{i}: malformed detection record: {e}") from e
    return dets


def read_ground_truth_jsonl(path):
    gts = []
    with open(path) as f:
        for i, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                gts.append(
                    GroundTruth(
                        image_id=str(rec["image_id"]),
                        box=tuple(float(v) for v in rec["bbox"]),
                        class_id=int(rec.get("class", 0)),
                    )
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
                raise FormatError(f"{path}:{i}: malformed ground-truth record: {e}") from e
    return gts


def write_detections_jsonl(path, dets):
    with open(path, "w") as f:
        for d in dets:
            f.write(
                json.dumps(
                    {"image_id": d.image_id, "bbox": list(d.box), "score": d.score, "class": d.class_id}
                )
                + "\n"
            )
