"""Manifest records, mask quality scoring, top-fraction selection and
scale-and-crop augmentation."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imagery import ChannelStack, Image, SoftMask, resize_bilinear, to_student_channels
from .postprocess import BoundingBox

SCALED_SIZE = 160
CROP_SIZE = 128
TARGET_SIZE = 32


class ManifestError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class DatasetEntry:
    video_id: str
    frame_index: int
    image_path: str
    mask_path: str | None = None
    score: float | None = None
    gt_box: BoundingBox | None = None
    gt_mask_path: str | None = None
    crop: int | None = None  # augmentation crop number, derived manifests only
    extra: dict = field(default_factory=dict)  # unknown fields, preserved verbatim

    @property
    def key(self):
        return (self.video_id, self.frame_index, -1 if self.crop is None else self.crop)

    def to_json(self) -> dict:
        d = {"video_id": self.video_id, "frame_index": self.frame_index, "image_path": self.image_path}
        if self.mask_path is not None:
            d["mask_path"] = self.mask_path
        if self.score is not None:
            d["score"] = self.score
        if self.gt_box is not None:
            d["gt_box"] = self.gt_box.as_list()
        if self.gt_mask_path is not None:
            d["gt_mask_path"] = self.gt_mask_path
        if self.crop is not None:
            d["crop"] = self.crop
        for k, v in self.extra.items():
            d.setdefault(k, v)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "DatasetEntry":
        if not isinstance(d, dict):
            raise ValueError("entry must be a JSON object")
        for key in ("video_id", "frame_index", "image_path"):
            if key not in d:
                raise ValueError(f"missing required field {key!r}")
        d = dict(d)
        vid, idx, img = d.pop("video_id"), d.pop("frame_index"), d.pop("image_path")
        if not isinstance(vid, str) or not isinstance(img, str):
            raise ValueError("video_id and image_path must be strings")
        if not isinstance(idx, int) or isinstance(idx, bool) or idx < 0:
            raise ValueError(f"frame_index must be a non-negative integer, got {idx!r}")
        score = d.pop("score", None)
        if score is not None and (not isinstance(score, (int, float)) or score < 0):
            raise ValueError(f"score must be a non-negative number, got {score!r}")
        box = d.pop("gt_box", None)
        return cls(
            video_id=vid,
            frame_index=idx,
            image_path=img,
            mask_path=d.pop("mask_path", None),
            score=None if score is None else float(score),
            gt_box=None if box is None else BoundingBox.from_list(box),
            gt_mask_path=d.pop("gt_mask_path", None),
            crop=d.pop("crop", None),
            extra=d,
        )


def write_manifest(entries, path) -> None:
    """JSON lines, one entry per line, UTF-8."""
    seen = set()
    lines = []
    for e in entries:
        if e.key in seen:
            raise ValueError(f"duplicate manifest entry {e.key}")
        seen.add(e.key)
        lines.append(json.dumps(e.to_json(), ensure_ascii=False, sort_keys=True))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_manifest(path) -> list[DatasetEntry]:
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                e = DatasetEntry.from_json(json.loads(line))
            except (ValueError, TypeError) as exc:
                raise ManifestError(str(exc), lineno) from None
            if e.key in seen:
                raise ManifestError(f"duplicate entry {e.key}", lineno)
            seen.add(e.key)
            entries.append(e)
    return entries


def resolve(manifest_path, rel) -> Path:
    """Manifest paths are relative to the manifest's own directory."""
    p = Path(rel)
    return p if p.is_absolute() else Path(manifest_path).parent / p


# --------------------------------------------------------------------------
# Selection


def score_mask(mask: SoftMask | np.ndarray) -> float:
    """Mean of the strictly positive mask values, 0 for an empty mask."""
    v = mask.values if isinstance(mask, SoftMask) else np.asarray(mask)
    nz = v[v > 0]
    return float(nz.mean()) if nz.size else 0.0


def keep_count(n: int, fraction: float) -> int:
    # round first so e.g. 0.1 * 30 does not become 4
    return min(n, math.ceil(round(fraction * n, 9)))


def select_top(entries, fraction: float = 0.10) -> list[DatasetEntry]:
    """Highest scores first; ties by ascending (video_id, frame_index)."""
    if not 0 < fraction <= 1:
        raise ValueError(f"keep fraction must be in (0, 1], got {fraction}")
    entries = list(entries)
    if any(e.score is None for e in entries):
        raise ValueError("all entries must be scored before selection")
    ranked = sorted(entries, key=lambda e: (-e.score, e.key))
    return ranked[: keep_count(len(ranked), fraction)]


# --------------------------------------------------------------------------
# Augmentation


@dataclass
class TrainingExample:
    input: ChannelStack  # 7 x 128 x 128
    target: SoftMask  # 32 x 32
    offset: tuple[int, int]  # crop origin (x, y) in the 160 x 160 scaled frame
    image_crop: Image  # the 128 x 128 RGB crop the input was computed from


def frame_rng(seed: int, video_id: str, frame_index: int) -> np.random.Generator:
    """Per-frame generator, independent of processing order."""
    digest = hashlib.blake2b(f"{seed}\x00{video_id}\x00{frame_index}".encode(), digest_size=16).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


def crop_offsets(rng: np.random.Generator, n_random: int) -> list[tuple[int, int]]:
    margin = SCALED_SIZE - CROP_SIZE
    offs = [(margin // 2, margin // 2)]
    for _ in range(n_random):
        x, y = rng.integers(0, margin + 1, size=2)
        offs.append((int(x), int(y)))
    return offs


def augment(image: Image, mask: SoftMask, rng: np.random.Generator, n_random: int = 4) -> list[TrainingExample]:
    """Center crop plus ``n_random`` random crops of the 160x160 rescaled pair."""
    if image.channels != 3:
        raise ValueError("augment expects an RGB image")
    big = resize_bilinear(image, SCALED_SIZE, SCALED_SIZE).data
    big_mask = resize_bilinear(mask, SCALED_SIZE, SCALED_SIZE).data
    out = []
    for x, y in crop_offsets(rng, n_random):
        crop = Image(np.ascontiguousarray(big[y : y + CROP_SIZE, x : x + CROP_SIZE]))
        mcrop = SoftMask(np.ascontiguousarray(big_mask[y : y + CROP_SIZE, x : x + CROP_SIZE]))
        out.append(
            TrainingExample(
                input=to_student_channels(crop, CROP_SIZE),
                target=resize_bilinear(mcrop, TARGET_SIZE, TARGET_SIZE),
                offset=(x, y),
                image_crop=crop,
            )
        )
    return out
