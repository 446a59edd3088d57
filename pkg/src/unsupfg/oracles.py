"""Deliberately naive reimplementations of the evaluation metrics.

Only used to cross-check the production code in tests.
"""

from __future__ import annotations

from .postprocess import BoundingBox


def iou_naive(a: BoundingBox, b: BoundingBox) -> float:
    x_lo, y_lo = min(a.x0, b.x0), min(a.y0, b.y0)
    x_hi, y_hi = max(a.x1, b.x1), max(a.y1, b.y1)
    inter = union = 0
    for y in range(y_lo, y_hi):
        for x in range(x_lo, x_hi):
            in_a = a.x0 <= x < a.x1 and a.y0 <= y < a.y1
            in_b = b.x0 <= x < b.x1 and b.y0 <= y < b.y1
            inter += in_a and in_b
            union += in_a or in_b
    return inter / union


def corloc_naive(predictions, ground_truth) -> float:
    total = hit = 0
    for i in range(len(ground_truth)):
        gts = ground_truth[i]
        if isinstance(gts, BoundingBox):
            gts = [gts]
        if not gts:
            continue
        total += 1
        preds = predictions[i] if i < len(predictions) else None
        if isinstance(preds, BoundingBox):
            preds = [preds]
        if not preds:
            continue
        best = 0.0
        for g in gts:
            best = max(best, iou_naive(preds[0], g))
        if best >= 0.5:
            hit += 1
    return hit / total if total else 0.0


def max_f_measure_naive(masks, gt_boxes) -> float:
    frames = []
    for m, boxes in zip(masks, gt_boxes):
        if isinstance(boxes, BoundingBox):
            boxes = [boxes]
        if boxes:
            frames.append((m, boxes))
    if not frames:
        return 0.0
    best = 0.0
    for t in range(1, 256):
        total = 0.0
        for m, boxes in frames:
            h, w = len(m), len(m[0])
            tp = pred = pos = 0
            for y in range(h):
                for x in range(w):
                    inside = any(b.x0 <= x < b.x1 and b.y0 <= y < b.y1 for b in boxes)
                    on = m[y][x] >= t
                    pos += inside
                    pred += on
                    tp += inside and on
            p = tp / pred if pred else 0.0
            r = tp / pos
            total += 2 * p * r / (p + r) if p + r > 0 else 0.0
        best = max(best, total / len(frames))
    return best


def pixel_metrics_naive(predicted, gt) -> dict[str, float]:
    tp = fp = fn = agree = n = 0
    for prow, grow in zip(predicted, gt):
        for p, g in zip(prow, grow):
            p, g = bool(p), bool(g)
            n += 1
            agree += p == g
            tp += p and g
            fp += p and not g
            fn += g and not p
    return {
        "accuracy": agree / n,
        "precision": tp / (tp + fp) if tp + fp else 0.0,
        "recall": tp / (tp + fn) if tp + fn else 0.0,
        "jaccard": tp / (tp + fp + fn) if tp + fp + fn else 0.0,
    }
