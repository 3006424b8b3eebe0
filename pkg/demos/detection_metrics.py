"""Score a toy detector with COCO-style average precision.

Creates a few ground-truth boxes, a detector that finds most of them with
some jitter plus a couple of false alarms, and prints the per-threshold AP
table, the mAP and the counts at IoU 0.5.
"""

import numpy as np

from trifuse.metrics import Detection, GroundTruth, evaluate

rng = np.random.default_rng(3)

gts, dets = [], []
for i in range(12):
    img = f"frame_{i % 4}"
    x, y = rng.uniform(0, 200, 2)
    w, h = rng.uniform(20, 60, 2)
    gts.append(GroundTruth(img, (x, y, x + w, y + h)))
    if rng.random() < 0.85:  # detector finds it, slightly off
        jx, jy = rng.uniform(-6, 6, 2)
        dets.append(
            Detection(img, (x + jx, y + jy, x + w + jx, y + h + jy),
                      score=float(rng.uniform(0.5, 1.0)))
        )
for _ in range(3):  # false alarms at low confidence
    x, y = rng.uniform(0, 200, 2)
    dets.append(Detection("frame_0", (x, y, x + 30, y + 30), score=float(rng.uniform(0.1, 0.4))))

report = evaluate(dets, gts)
print(f"{len(gts)} ground truths, {len(dets)} detections")
print(f"\nmAP   = {report.mean_ap:.4f}")
print(f"mAP50 = {report.ap50:.4f}")
print(f"counts at IoU 0.5: {report.counts_at_50}")
print("\nper-threshold AP:")
for t, ap in report.per_threshold.items():
    bar = "#" * int(ap * 40)
    print(f"  {t:.2f}: {ap:.4f} {bar}")
