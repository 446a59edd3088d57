"""Deterministic synthetic videos of one colored object moving over a
static, noisy, low-saturation background, with exact ground truth."""

from __future__ import annotations

import colorsys
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import DatasetEntry, write_manifest
from .imagery import Image, SoftMask, write_netpbm
from .postprocess import BoundingBox


@dataclass
class SynthConfig:
    frame_w: int = 128
    frame_h: int = 128
    frames: int = 60
    shape: str = "rectangle"  # or "ellipse"
    area_min: float = 0.05
    area_max: float = 0.20
    object_color: tuple | None = None  # RGB; auto when None
    background_color: tuple | None = None  # RGB; auto when None
    amplitude: float = 0.8  # fraction of the free travel range
    period_min: float = 40.0  # frames
    period_max: float = 90.0
    pause_fraction: float = 0.52  # share of frames the object rests in place
    noise_sigma: float = 4.0 / 255.0
    videos: int = 20
    test_videos: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.area_min <= self.area_max < 1:
            raise ValueError("area fractions must satisfy 0 < area_min <= area_max < 1")
        if self.frames < 2:
            raise ValueError("a video needs at least 2 frames")
        if self.shape not in ("rectangle", "ellipse"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if not 0 <= self.amplitude <= 1:
            raise ValueError("amplitude is a fraction in [0, 1]")
        if self.period_min <= 0 or self.period_max < self.period_min:
            raise ValueError("invalid period range")
        if not 0 <= self.pause_fraction < 1:
            raise ValueError("pause_fraction must be in [0, 1)")

    def step_bound(self) -> float:
        """Upper bound on the per-frame displacement of the object's box origin."""
        travel = self.amplitude * max(self.frame_w, self.frame_h) / 2.0
        return math.hypot(1, 1) * (2 * math.pi * travel / self.period_min + 1.0)


@dataclass
class SynthVideo:
    video_id: str
    split: str
    frames: np.ndarray  # (F, H, W, 3) uint8
    gt_masks: np.ndarray  # (F, H, W) bool
    gt_boxes: list = field(default_factory=list)
    origins: np.ndarray = None  # (F, 2) object box top-left, x then y

    def images(self) -> list[Image]:
        return [Image(f) for f in self.frames]


def _auto_colors(rng: np.random.Generator):
    while True:
        gray = rng.uniform(70, 180)
        bg = np.clip(gray + rng.uniform(-8, 8, size=3), 0, 255)
        h, s, v = rng.uniform(0, 1), rng.uniform(0.75, 1.0), rng.uniform(0.7, 1.0)
        obj = np.array(colorsys.hsv_to_rgb(h, s, v)) * 255.0
        if np.linalg.norm(obj - bg) >= 90:
            return obj, bg


def _background(rng, w, h, base):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    tex = np.zeros((h, w))
    for _ in range(2):
        ang = rng.uniform(0, np.pi)
        freq = rng.uniform(1.0, 3.0) * 2 * np.pi / max(w, h)
        tex += 7.0 * np.sin(freq * (np.cos(ang) * xx + np.sin(ang) * yy) + rng.uniform(0, 2 * np.pi))
    return base[None, None, :] + tex[:, :, None]


def _object_size(rng, cfg: SynthConfig):
    total = cfg.frame_w * cfg.frame_h
    span = cfg.area_max - cfg.area_min
    frac = rng.uniform(cfg.area_min + 0.1 * span, cfg.area_max - 0.1 * span)
    aspect = rng.uniform(0.7, 1.4)
    if cfg.shape == "ellipse":
        # bounding box of an ellipse covers 4/pi of its area
        frac = frac * 4.0 / math.pi
    ow = max(1, int(round(math.sqrt(frac * total * aspect))))
    oh = max(1, int(round(frac * total / ow)))
    if ow > cfg.frame_w or oh > cfg.frame_h:
        raise ValueError(f"object {ow}x{oh} does not fit in a {cfg.frame_w}x{cfg.frame_h} frame")
    return ow, oh


def _shape_mask(cfg: SynthConfig, ow: int, oh: int) -> np.ndarray:
    if cfg.shape == "rectangle":
        return np.ones((oh, ow), dtype=bool)
    yy, xx = np.mgrid[0:oh, 0:ow]
    return ((xx + 0.5 - ow / 2) / (ow / 2)) ** 2 + ((yy + 0.5 - oh / 2) / (oh / 2)) ** 2 <= 1.0


def generate_video(cfg: SynthConfig, index: int) -> SynthVideo:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, index]))
    split = "train" if index < cfg.videos else "test"
    vid = f"{split}{index if split == 'train' else index - cfg.videos:03d}"
    obj, bg = _auto_colors(rng)
    if cfg.object_color is not None:
        obj = np.asarray(cfg.object_color, dtype=np.float64)
    if cfg.background_color is not None:
        bg = np.asarray(cfg.background_color, dtype=np.float64)
    ow, oh = _object_size(rng, cfg)
    shape = _shape_mask(cfg, ow, oh)
    background = _background(rng, cfg.frame_w, cfg.frame_h, bg)

    free_x, free_y = cfg.frame_w - ow, cfg.frame_h - oh
    amp_x, amp_y = cfg.amplitude * free_x / 2.0, cfg.amplitude * free_y / 2.0
    cx = free_x / 2.0 + rng.uniform(-1, 1) * (free_x / 2.0 - amp_x)
    cy = free_y / 2.0 + rng.uniform(-1, 1) * (free_y / 2.0 - amp_y)
    px, py = rng.uniform(cfg.period_min, cfg.period_max, size=2)
    phx, phy = rng.uniform(0, 2 * np.pi, size=2)
    # motion clock; it stops for one contiguous pause
    pause = int(round(cfg.pause_fraction * cfg.frames))
    start = int(rng.integers(0, cfg.frames - pause + 1))
    t = np.arange(cfg.frames)
    t = np.where(t < start, t, np.maximum(start, t - pause))
    ox = np.clip(np.round(cx + amp_x * np.sin(2 * np.pi * t / px + phx)), 0, free_x).astype(int)
    oy = np.clip(np.round(cy + amp_y * np.sin(2 * np.pi * t / py + phy)), 0, free_y).astype(int)

    noise = rng.normal(0.0, cfg.noise_sigma * 255.0, size=(cfg.frames, cfg.frame_h, cfg.frame_w, 3))
    frames = np.empty((cfg.frames, cfg.frame_h, cfg.frame_w, 3), dtype=np.uint8)
    masks = np.zeros((cfg.frames, cfg.frame_h, cfg.frame_w), dtype=bool)
    boxes = []
    for i in range(cfg.frames):
        m = masks[i]
        m[oy[i] : oy[i] + oh, ox[i] : ox[i] + ow] = shape
        img = np.where(m[:, :, None], obj[None, None, :], background) + noise[i]
        frames[i] = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
        boxes.append(BoundingBox.of_mask(m))
    return SynthVideo(vid, split, frames, masks, boxes, np.stack([ox, oy], axis=1))


def generate(cfg: SynthConfig, workers: int = 1) -> list[SynthVideo]:
    """All train videos followed by the held-out ones, fully determined by ``cfg.seed``."""
    indices = range(cfg.videos + cfg.test_videos)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda i: generate_video(cfg, i), indices))
    return [generate_video(cfg, i) for i in indices]


def write_corpus(videos: list[SynthVideo], out_dir) -> dict[str, Path]:
    """Write frames (P6), GT masks (P5) and one manifest per split.

    Manifest paths are relative to the manifest's directory.
    """
    out_dir = Path(out_dir)
    entries: dict[str, list] = {}
    for v in videos:
        for i, frame in enumerate(v.frames):
            img_rel = f"videos/{v.video_id}/frame_{i:04d}.ppm"
            gt_rel = f"videos/{v.video_id}/gt_{i:04d}.pgm"
            write_netpbm(out_dir / img_rel, Image(frame))
            write_netpbm(out_dir / gt_rel, SoftMask.from_values(v.gt_masks[i].astype(np.uint8) * 255))
            entries.setdefault(v.split, []).append(
                DatasetEntry(v.video_id, i, img_rel, gt_box=v.gt_boxes[i], gt_mask_path=gt_rel)
            )
    paths = {}
    for split, es in entries.items():
        paths[split] = out_dir / f"{split}.jsonl"
        write_manifest(es, paths[split])
    return paths


def corrupt_masks(masks: list[SoftMask], fraction: float, rng: np.random.Generator) -> tuple[list[SoftMask], np.ndarray]:
    """Replace ``round(fraction * n)`` masks by uniform noise in [0, 64].

    Returns the new list and the sorted indices that were replaced.
    """
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must be in [0, 1]")
    n = len(masks)
    count = int(round(fraction * n))
    chosen = np.sort(rng.choice(n, size=count, replace=False)) if count else np.zeros(0, dtype=int)
    out = list(masks)
    for i in chosen:
        shape = masks[i].data.shape
        out[i] = SoftMask(rng.integers(0, 65, size=shape, dtype=np.uint8))
    return out, chosen
