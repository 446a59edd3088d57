"""File-based pipeline stages.  Each stage reads manifests and writes files
plus a new manifest; paths inside a manifest are relative to it."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import AugmentConfig, BoxesConfig, RunConfig, SelectConfig
from .dataset import DatasetEntry, augment, frame_rng, read_manifest, resolve, score_mask, select_top, write_manifest
from .evaluation import EvalReport, corloc_report, max_f_report, pixel_reports
from .imagery import SoftMask, read_mask, read_netpbm, read_netpbm_size, resize_bilinear, to_student_channels, write_netpbm
from .postprocess import BoundingBox, fit_boxes
from .student.checkpoint import load_checkpoint, save_checkpoint
from .student.net import Student
from .student.train import TrainConfig, load_examples, train
from .synthvideo import SynthConfig, generate, write_corpus
from .teacher import TeacherConfig, discover

log = logging.getLogger(__name__)

INFER_CHUNK = 16  # fixed so results never depend on the worker count
METRICS = ("maxf", "corloc", "pixel")


def _map(fn, items, workers: int) -> list:
    """Ordered map; the output order is the input order for any worker count."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def _rel(path: Path, base: Path) -> str:
    return Path(os.path.relpath(path, base)).as_posix()


def _require(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{p} does not exist")
    return p


def _rebase(entry: DatasetEntry, src_manifest: Path, dst_dir: Path, **changes) -> DatasetEntry:
    """Copy of ``entry`` whose existing paths are valid relative to ``dst_dir``."""
    def fix(rel):
        return None if rel is None else _rel(resolve(src_manifest, rel), dst_dir)

    paths = {
        "image_path": fix(entry.image_path),
        "mask_path": fix(entry.mask_path),
        "gt_mask_path": fix(entry.gt_mask_path),
    }
    return replace(entry, **{**paths, **changes})


def _videos(entries):
    groups: dict[str, list[DatasetEntry]] = {}
    for e in entries:
        groups.setdefault(e.video_id, []).append(e)
    return [sorted(g, key=lambda e: e.frame_index) for g in groups.values()]


# --------------------------------------------------------------------------


def synth_stage(cfg: SynthConfig, out_dir, workers: int = 1) -> dict[str, Path]:
    return write_corpus(generate(cfg, workers), out_dir)


def teach_stage(manifest, out_dir, cfg: TeacherConfig | None = None, workers: int = 1) -> Path:
    """Teacher soft masks for every video of the manifest."""
    manifest = _require(manifest)
    out_dir = Path(out_dir)
    cfg = cfg or TeacherConfig()
    videos = _videos(read_manifest(manifest))

    def run(video):
        frames = [read_netpbm(resolve(manifest, e.image_path)) for e in video]
        out = []
        for e, m in zip(video, discover(frames, cfg)):
            path = out_dir / "masks" / e.video_id / f"mask_{e.frame_index:04d}.pgm"
            write_netpbm(path, m)
            out.append(_rebase(e, manifest, out_dir, mask_path=_rel(path, out_dir)))
        return out

    entries = [e for part in _map(run, videos, workers) for e in part]
    path = out_dir / "teach.jsonl"
    write_manifest(entries, path)
    return path


def select_stage(manifest, out_path, cfg: SelectConfig | None = None) -> Path:
    manifest = _require(manifest)
    out_path = Path(out_path)
    cfg = cfg or SelectConfig()
    scored = []
    for e in read_manifest(manifest):
        if e.mask_path is None:
            raise ValueError(f"{manifest}: entry {e.key} has no mask_path")
        mask = read_mask(resolve(manifest, e.mask_path))
        scored.append(_rebase(e, manifest, out_path.parent, score=score_mask(mask)))
    write_manifest(select_top(scored, cfg.keep_fraction), out_path)
    return out_path


def augment_stage(manifest, out_dir, cfg: AugmentConfig | None = None, seed: int = 0, workers: int = 1) -> Path:
    """Crops persisted as P6 image crops plus P5 32x32 targets."""
    manifest = _require(manifest)
    out_dir = Path(out_dir)
    cfg = cfg or AugmentConfig()

    def run(e: DatasetEntry):
        img = read_netpbm(resolve(manifest, e.image_path))
        mask = read_mask(resolve(manifest, e.mask_path))
        out = []
        for i, ex in enumerate(augment(img, mask, frame_rng(seed, e.video_id, e.frame_index), cfg.n_random)):
            stem = out_dir / "crops" / e.video_id / f"{e.frame_index:04d}_{i}"
            write_netpbm(stem.with_suffix(".ppm"), ex.image_crop)
            write_netpbm(stem.with_suffix(".pgm"), ex.target)
            out.append(
                DatasetEntry(
                    e.video_id, e.frame_index, _rel(stem.with_suffix(".ppm"), out_dir),
                    mask_path=_rel(stem.with_suffix(".pgm"), out_dir), score=e.score, crop=i,
                    extra={"offset": list(ex.offset)},
                )
            )
        return out

    entries = [x for part in _map(run, read_manifest(manifest), workers) for x in part]
    path = out_dir / "augmented.jsonl"
    write_manifest(entries, path)
    return path


def train_stage(manifest, out_dir, cfg: TrainConfig) -> Path:
    manifest = _require(manifest)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = replace(cfg, out_dir=str(out_dir), loss_log=str(out_dir / "loss.csv"))
    x, y = load_examples(manifest)
    result = train(x, y, cfg)
    path = out_dir / "student.usfg"
    save_checkpoint(path, result.student.params, result.state, result.student.arch)
    return path


def infer_stage(checkpoint, manifest, out_dir, workers: int = 1) -> Path:
    """One 32x32 soft mask per manifest image."""
    checkpoint, manifest = _require(checkpoint), _require(manifest)
    out_dir = Path(out_dir)
    params, _, arch = load_checkpoint(checkpoint)
    student = Student(arch, params)
    entries = read_manifest(manifest)
    chunks = [entries[i : i + INFER_CHUNK] for i in range(0, len(entries), INFER_CHUNK)]

    def run(chunk):
        x = np.stack(
            [to_student_channels(read_netpbm(resolve(manifest, e.image_path)), arch.input_size).planes for e in chunk]
        )
        out = []
        for e, m in zip(chunk, student.predict(x)):
            path = out_dir / "pred" / e.video_id / f"pred_{e.frame_index:04d}.pgm"
            write_netpbm(path, SoftMask.from_values(m))
            out.append(_rebase(e, manifest, out_dir, mask_path=_rel(path, out_dir), score=None))
        return out

    result = [e for part in _map(run, chunks, workers) for e in part]
    path = out_dir / "infer.jsonl"
    write_manifest(result, path)
    return path


def boxes_stage(manifest, out_path, cfg: BoxesConfig | None = None) -> Path:
    """Adds ``boxes`` ([x0, y0, x1, y1] lists, strongest first) and ``box_scores``."""
    manifest = _require(manifest)
    out_path = Path(out_path)
    cfg = cfg or BoxesConfig()
    out = []
    for e in read_manifest(manifest):
        w, h = read_netpbm_size(resolve(manifest, e.image_path))
        scored = fit_boxes(read_mask(resolve(manifest, e.mask_path)), w, h, cfg.theta_rel, cfg.min_area_frac)
        extra = dict(e.extra, boxes=[s.box.as_list() for s in scored], box_scores=[s.score for s in scored])
        out.append(_rebase(e, manifest, out_path.parent, extra=extra))
    write_manifest(out, out_path)
    return out_path


def _frame_masks(manifest: Path, e: DatasetEntry) -> np.ndarray:
    img_w, img_h = read_netpbm_size(resolve(manifest, e.image_path))
    return resize_bilinear(read_mask(resolve(manifest, e.mask_path)), img_w, img_h).values


def eval_stage(manifest, metric: str, out_path=None, theta_rel: float = 0.5, workers: int = 1) -> list[EvalReport]:
    """Reports per video (the class) and their frame-weighted mean."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}")
    manifest = _require(manifest)
    entries = read_manifest(manifest)
    classes = [e.video_id for e in entries]
    gt = [e.gt_box for e in entries]
    if metric == "maxf":
        masks = _map(lambda e: _frame_masks(manifest, e), entries, workers)
        reports = [max_f_report(classes, masks, gt, {"manifest": manifest.name})]
    elif metric == "corloc":
        preds = []
        for e in entries:
            if "boxes" not in e.extra:
                raise ValueError(f"{manifest}: entry {e.key} has no boxes; run the boxes stage first")
            preds.append([BoundingBox.from_list(b) for b in e.extra["boxes"]])
        reports = [corloc_report(classes, preds, gt, {"manifest": manifest.name})]
    else:
        def binary(e):
            values = _frame_masks(manifest, e)
            peak = int(values.max())
            return values >= theta_rel * peak if peak else np.zeros(values.shape, bool)

        pred = _map(binary, entries, workers)
        gts = []
        for e in entries:
            if e.gt_mask_path is None:
                raise ValueError(f"{manifest}: entry {e.key} has no gt_mask_path")
            gts.append(read_mask(resolve(manifest, e.gt_mask_path)).values > 0)
        reports = pixel_reports(classes, pred, gts, {"manifest": manifest.name, "theta_rel": theta_rel})
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text("[" + ",\n".join(r.to_json() for r in reports) + "]\n", encoding="utf-8")
    return reports


def run_pipeline(cfg: RunConfig) -> dict[str, EvalReport]:
    """Corpus, teacher, selection, augmentation, training, inference, boxes and
    evaluation of both teacher and student on the held-out videos."""
    root = cfg.workdir
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.cfg").write_text(cfg.as_text(), encoding="utf-8")
    w = cfg.run.workers
    corpus = synth_stage(cfg.synth, root / "corpus", w)
    if "train" not in corpus or "test" not in corpus:
        raise ValueError("the corpus needs both train and test videos")
    log.info("teacher on training videos")
    teach_train = teach_stage(corpus["train"], root / "teach_train", cfg.teacher, w)
    selected = select_stage(teach_train, root / "select" / "selected.jsonl", cfg.select)
    augmented = augment_stage(selected, root / "augment", cfg.augment, cfg.run.seed, w)
    log.info("training the student")
    ckpt = train_stage(augmented, root / "train", cfg.train)
    log.info("evaluating on held-out videos")
    teach_test = teach_stage(corpus["test"], root / "teach_test", cfg.teacher, w)
    infer = infer_stage(ckpt, corpus["test"], root / "infer", w)
    reports = {}
    for who, manifest in (("teacher", teach_test), ("student", infer)):
        boxed = boxes_stage(manifest, root / "boxes" / f"{who}.jsonl", cfg.boxes)
        for metric in METRICS:
            for r in eval_stage(boxed, metric, root / "reports" / f"{who}_{metric}.json", cfg.boxes.theta_rel, w):
                reports[f"{who}.{r.metric}"] = r
    return reports
