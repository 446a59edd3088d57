"""Box IoU, CorLoc, max F-measure against GT boxes and per-pixel scores."""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .postprocess import BoundingBox

N_LEVELS = 256


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    inter = iw * ih if iw > 0 and ih > 0 else 0
    return inter / (a.area + b.area - inter)


def _as_box_list(v) -> list[BoundingBox]:
    if v is None:
        return []
    if isinstance(v, BoundingBox):
        return [v]
    return list(v)


def corloc(predictions, ground_truth) -> float:
    """Fraction of frames whose first predicted box has IoU >= 0.5 with any GT box.

    ``predictions`` and ``ground_truth`` hold one entry per frame (a box, a
    list of boxes, or None).  Frames without GT are excluded; a missing
    prediction counts as a miss.
    """
    predictions = list(predictions)
    total = hit = missing = 0
    for i, gt in enumerate(ground_truth):
        gts = _as_box_list(gt)
        if not gts:
            continue
        total += 1
        if i >= len(predictions) or predictions[i] is None:
            missing += 1
            continue
        preds = _as_box_list(predictions[i])
        if preds and any(iou(preds[0], g) >= 0.5 for g in gts):
            hit += 1
    if missing:
        warnings.warn(f"{missing} frame(s) without a prediction list counted as not localized", stacklevel=2)
    return hit / total if total else 0.0


def box_region(boxes, width: int, height: int) -> np.ndarray:
    region = np.zeros((height, width), dtype=bool)
    for b in _as_box_list(boxes):
        region[b.y0 : b.y1, b.x0 : b.x1] = True
    return region


def f_measure_curve(mask: np.ndarray, boxes) -> np.ndarray | None:
    """F-measure at every threshold t in 1..255 (pixel on iff value >= t).

    Entry i holds threshold i + 1.  t = 0 is left out: it switches on every
    pixel, which would give an all-zero mask a positive score.  None when the
    frame has no GT box.
    """
    mask = np.asarray(mask)
    region = box_region(boxes, mask.shape[1], mask.shape[0])
    positives = int(region.sum())
    if positives == 0:
        return None
    v = mask.astype(np.int64)
    # counts of values >= t for every t: reverse cumulative histogram
    ge_all = np.bincount(v.ravel(), minlength=N_LEVELS)[::-1].cumsum()[::-1].astype(np.float64)
    ge_in = np.bincount(v[region], minlength=N_LEVELS)[::-1].cumsum()[::-1].astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(ge_all > 0, ge_in / ge_all, 0.0)
        recall = ge_in / positives
        f = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    return f[1:]


def max_f_measure(masks, gt_boxes, return_threshold: bool = False):
    """Max over thresholds of the frame-averaged F-measure.

    ``masks`` are 8-bit soft masks already at frame resolution.
    """
    curves = [c for c in (f_measure_curve(m, b) for m, b in zip(masks, gt_boxes)) if c is not None]
    if not curves:
        return (0.0, 1) if return_threshold else 0.0
    mean = np.mean(curves, axis=0)
    i = int(np.argmax(mean))
    return (float(mean[i]), i + 1) if return_threshold else float(mean[i])


def pixel_metrics(predicted: np.ndarray, gt: np.ndarray) -> dict[str, float]:
    predicted = np.asarray(predicted, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if predicted.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {predicted.shape} vs {gt.shape}")
    if predicted.size == 0:
        raise ValueError("pixel metrics of an empty image are undefined")
    tp = int(np.count_nonzero(predicted & gt))
    fp = int(np.count_nonzero(predicted & ~gt))
    fn = int(np.count_nonzero(~predicted & gt))

    def ratio(a, b):
        return a / b if b else 0.0

    return {
        "accuracy": float(np.count_nonzero(predicted == gt)) / predicted.size,
        "precision": ratio(tp, tp + fp),
        "recall": ratio(tp, tp + fn),
        "jaccard": ratio(tp, tp + fp + fn),
    }


# --------------------------------------------------------------------------
# Reports


@dataclass
class EvalReport:
    metric: str
    per_class: dict[str, float]
    class_frames: dict[str, int]
    mean: float
    frames: int
    config: dict = field(default_factory=dict)

    @classmethod
    def build(cls, metric: str, per_class: dict, class_frames: dict, config: dict | None = None) -> "EvalReport":
        names = sorted(per_class)
        frames = sum(class_frames[n] for n in names)
        mean = sum(per_class[n] * class_frames[n] for n in names) / frames if frames else 0.0
        return cls(
            metric,
            {n: float(per_class[n]) for n in names},
            {n: int(class_frames[n]) for n in names},
            float(mean),
            int(frames),
            dict(config or {}),
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))

    def table(self) -> str:
        width = max([len(self.metric), 5] + [len(n) for n in self.per_class])
        lines = [f"{'class':<{width}}  {'frames':>6}  {self.metric}"]
        for name, value in self.per_class.items():
            lines.append(f"{name:<{width}}  {self.class_frames[name]:>6}  {value:.4f}")
        lines.append(f"{'mean':<{width}}  {self.frames:>6}  {self.mean:.4f}")
        return "\n".join(lines)


def _group(keys):
    groups: dict[str, list[int]] = {}
    for i, k in enumerate(keys):
        groups.setdefault(k, []).append(i)
    return groups


def max_f_report(classes, masks, gt_boxes, config=None) -> EvalReport:
    """Per-class max F-measure; the dataset value is the frame-weighted class mean."""
    per, counts = {}, {}
    for name, idx in _group(classes).items():
        valid = [i for i in idx if _as_box_list(gt_boxes[i])]
        if not valid:
            continue
        per[name] = max_f_measure([masks[i] for i in valid], [gt_boxes[i] for i in valid])
        counts[name] = len(valid)
    cfg = {"aggregation": "per-frame mean at a shared threshold t in 1..255, max over t", **(config or {})}
    return EvalReport.build("max_f", per, counts, cfg)


def corloc_report(classes, predictions, gt_boxes, config=None) -> EvalReport:
    per, counts = {}, {}
    for name, idx in _group(classes).items():
        valid = [i for i in idx if _as_box_list(gt_boxes[i])]
        if not valid:
            continue
        per[name] = corloc([predictions[i] for i in valid], [gt_boxes[i] for i in valid])
        counts[name] = len(valid)
    cfg = {"convention": "first predicted box vs any GT box, IoU >= 0.5", **(config or {})}
    return EvalReport.build("corloc", per, counts, cfg)


def pixel_reports(classes, predicted, gt, config=None) -> list[EvalReport]:
    """Frame-averaged accuracy, precision, recall and Jaccard per class."""
    groups = _group(classes)
    scores = [pixel_metrics(p, g) for p, g in zip(predicted, gt)]
    reports = []
    for key in ("accuracy", "precision", "recall", "jaccard"):
        per = {n: float(np.mean([scores[i][key] for i in idx])) for n, idx in groups.items()}
        counts = {n: len(idx) for n, idx in groups.items()}
        reports.append(EvalReport.build(f"pixel_{key}", per, counts, config))
    return reports
