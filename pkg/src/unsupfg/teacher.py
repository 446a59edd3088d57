"""Video foreground discovery from PCA background modeling.

Frames are downscaled to a small working resolution and modeled by a
low-rank PCA subspace.  Pixels the subspace reconstructs poorly seed
foreground/background color histograms, and the per-pixel color
posterior is fused with the reconstruction error into a soft mask.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .imagery import Image, SoftMask, bilinear_matrix, read_netpbm
from .jacobi import jacobi_eigh

log = logging.getLogger(__name__)

# error maxima at or below this are floating-point residue of a static video
STATIC_TOL = 1e-9

N_BINS = 512  # 8 x 8 x 8 quantized RGB


class ReducedRankWarning(UserWarning):
    """Fewer principal components than requested could be fitted."""


class DegenerateVideoWarning(UserWarning):
    """The video carries no foreground evidence; masks are all zero."""


class DegenerateVideoError(ValueError):
    pass


@dataclass
class TeacherConfig:
    work_w: int = 64
    work_h: int = 64
    k: int = 8
    max_fit_frames: int = 1000
    sigma: float = 2.0
    fg_seed_percent: float = 15.0
    bg_seed_percent: float = 50.0
    refine_iters: int = 2
    combine_mode: str = "geometric"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        for name in ("fg_seed_percent", "bg_seed_percent"):
            v = getattr(self, name)
            if not 0 < v < 100:
                raise ValueError(f"{name} must be in (0, 100), got {v}")
        if self.combine_mode not in COMBINE_MODES:
            raise ValueError(f"combine_mode must be one of {sorted(COMBINE_MODES)}")
        if self.work_w < 1 or self.work_h < 1:
            raise ValueError("working resolution must be >= 1")


@dataclass
class VideoSequence:
    video_id: str
    frame_paths: list  # ordered
    frame_indices: list = None

    def __post_init__(self):
        if self.frame_indices is None:
            self.frame_indices = list(range(len(self.frame_paths)))

    def load_frames(self) -> list[Image]:
        return [read_netpbm(p) for p in self.frame_paths]


@dataclass
class PcaModel:
    work_w: int
    work_h: int
    mean: np.ndarray  # (D,)
    components: np.ndarray  # (k, D), orthonormal rows
    eigenvalues: np.ndarray  # (k,) covariance eigenvalues, non-increasing
    requested_k: int
    notes: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.components.shape[0]


@dataclass
class ColorModel:
    fg_hist: np.ndarray  # (512,)
    bg_hist: np.ndarray  # (512,)
    prior_fg: float


# --------------------------------------------------------------------------


def _to_work(frames, work_w: int, work_h: int) -> np.ndarray:
    """Stack frames as float64 (F, work_h, work_w, 3) in [0, 1]."""
    arrs = [f.data if isinstance(f, Image) else np.asarray(f) for f in frames]
    shape = arrs[0].shape
    for a in arrs:
        if a.shape != shape:
            raise ValueError(f"frame shape {a.shape} differs from {shape}")
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError("teacher frames must be RGB")
    h, w = shape[:2]
    stack = np.stack(arrs).astype(np.float64) / 255.0
    if (h, w) == (work_h, work_w):
        return stack
    ry = bilinear_matrix(h, work_h)
    rx = bilinear_matrix(w, work_w)
    return np.einsum("yh,fhwc,xw->fyxc", ry, stack, rx, optimize=True)


def fit_pca(frames, config: TeacherConfig | None = None, *, work=None, warn: bool = True) -> PcaModel:
    """Fit mean and top-k principal directions through the frame Gram matrix.

    A rank below the requested k is recorded in ``notes`` and, with ``warn``,
    also raised as a ReducedRankWarning.
    """
    config = config or TeacherConfig()
    if work is None:
        if len(frames) < 2:
            raise ValueError("fit_pca needs at least 2 frames")
        work = _to_work(frames, config.work_w, config.work_h)
    n = work.shape[0]
    x = work.reshape(n, -1)
    if n > config.max_fit_frames:
        idx = np.unique(np.linspace(0, n - 1, config.max_fit_frames).round().astype(int))
        x = x[idx]
    f, d = x.shape
    mean = x.mean(axis=0)
    xc = x - mean
    gram = xc @ xc.T
    lam, u = jacobi_eigh(gram)
    top = lam[0] if f else 0.0
    rank = int(np.count_nonzero(lam > max(top * 1e-10, 1e-12)))
    k = min(config.k, rank, d)
    comps = (xc.T @ u[:, :k] / np.sqrt(lam[:k])).T if k else np.zeros((0, d))
    model = PcaModel(
        work_w=config.work_w,
        work_h=config.work_h,
        mean=mean,
        components=np.ascontiguousarray(comps),
        eigenvalues=lam[:k] / f,
        requested_k=config.k,
    )
    if k < config.k:
        msg = f"requested k={config.k} but data rank is {rank}; using k={k}"
        model.notes.append(msg)
        if warn:
            warnings.warn(msg, ReducedRankWarning, stacklevel=2)
    return model


def _residual_maps(model: PcaModel, work: np.ndarray, sigma: float) -> np.ndarray:
    n = work.shape[0]
    xc = work.reshape(n, -1) - model.mean
    if model.k:
        xc = xc - (xc @ model.components.T) @ model.components
    err = np.sqrt((xc.reshape(n, model.work_h, model.work_w, 3) ** 2).sum(axis=3))
    if sigma > 0:
        err = gaussian_filter(err, sigma=(0, sigma, sigma), mode="nearest")
    return np.maximum(err, 0.0)


def error_map(model: PcaModel, frame, sigma: float = 2.0) -> np.ndarray:
    """Smoothed per-pixel RGB reconstruction error at working resolution.

    ``frame`` is an Image at any resolution, or an already downscaled
    (work_h, work_w, 3) float array in [0, 1].
    """
    if isinstance(frame, Image):
        work = _to_work([frame], model.work_w, model.work_h)
    else:
        work = np.asarray(frame, dtype=np.float64)[None]
        if work.shape[1:] != (model.work_h, model.work_w, 3):
            raise ValueError(f"frame shape {work.shape[1:]} does not match the model")
    return _residual_maps(model, work, sigma)[0]


def color_bins(rgb8: np.ndarray) -> np.ndarray:
    """Histogram bin index (0..511) of 8-bit RGB pixels."""
    rgb8 = rgb8.astype(np.int64)
    return (rgb8[..., 0] >> 5) * 64 + (rgb8[..., 1] >> 5) * 8 + (rgb8[..., 2] >> 5)


def _histogram(bins: np.ndarray) -> np.ndarray:
    counts = np.bincount(bins.ravel(), minlength=N_BINS).astype(np.float64) + 1.0
    return counts / counts.sum()


def fit_color_model(frames, error_maps, config: TeacherConfig | None = None) -> ColorModel:
    """Seed fg/bg color histograms from jointly normalized error maps.

    ``frames`` are 8-bit RGB arrays at the error maps' resolution.
    """
    config = config or TeacherConfig()
    errs = np.asarray(error_maps, dtype=np.float64)
    bins = color_bins(np.asarray([f.data if isinstance(f, Image) else f for f in frames]))
    hi = np.percentile(errs, 100.0 - config.fg_seed_percent)
    lo = np.percentile(errs, config.bg_seed_percent)
    fg = errs > hi
    bg = errs <= lo
    if not fg.any() or not bg.any():
        raise DegenerateVideoError("error maps carry no foreground seed")
    return ColorModel(_histogram(bins[fg]), _histogram(bins[bg]), float(fg.mean()))


def classify_pixels(color_model: ColorModel, frame) -> np.ndarray:
    """Per-pixel foreground posterior from the color likelihoods."""
    rgb = frame.data if isinstance(frame, Image) else np.asarray(frame)
    b = color_bins(rgb)
    pf = color_model.prior_fg * color_model.fg_hist[b]
    pb = (1.0 - color_model.prior_fg) * color_model.bg_hist[b]
    return pf / (pf + pb)


def refine_color_model(color_model: ColorModel, frames, iters: int) -> tuple[ColorModel, np.ndarray]:
    """Re-fit the histograms from pixels whose posterior is >= 0.5, ``iters`` times.

    Returns the final model and its posterior over ``frames``.
    """
    rgb8 = np.asarray(frames)
    post = classify_pixels(color_model, rgb8)
    bins = color_bins(rgb8)
    for _ in range(iters):
        fg = post >= 0.5
        if not fg.any() or fg.all():
            break
        color_model = ColorModel(_histogram(bins[fg]), _histogram(bins[~fg]), float(fg.mean()))
        post = classify_pixels(color_model, rgb8)
    return color_model, post


def _combine(err255: np.ndarray, post: np.ndarray, mode: str) -> np.ndarray:
    return COMBINE_MODES[mode](err255, 255.0 * post)


COMBINE_MODES = {
    "geometric": lambda e, p: np.sqrt(e * p),
    "error": lambda e, p: e,
    "posterior": lambda e, p: p,
}


def _zero_masks(n: int, config: TeacherConfig) -> list[SoftMask]:
    return [SoftMask(np.zeros((config.work_h, config.work_w, 1), np.uint8)) for _ in range(n)]


def discover(frames, config: TeacherConfig | None = None) -> list[SoftMask]:
    """One soft mask per frame (working resolution, 0-255), in frame order."""
    config = config or TeacherConfig()
    n = len(frames)
    if n < 2:
        warnings.warn(f"video has {n} frame(s); emitting zero masks", DegenerateVideoWarning, stacklevel=2)
        return _zero_masks(n, config)
    work = _to_work(frames, config.work_w, config.work_h)
    # a short or nearly static video legitimately has low rank
    model = fit_pca(None, config, work=work, warn=False)
    err = _residual_maps(model, work, config.sigma)
    top = err.max()
    if not top > STATIC_TOL:
        warnings.warn("static video; emitting zero masks", DegenerateVideoWarning, stacklevel=2)
        return _zero_masks(n, config)
    err255 = err * (255.0 / top)
    rgb8 = np.clip(np.floor(work * 255.0 + 0.5), 0, 255).astype(np.uint8)
    try:
        cm = fit_color_model(rgb8, err255, config)
    except DegenerateVideoError:
        warnings.warn("no foreground seed; emitting zero masks", DegenerateVideoWarning, stacklevel=2)
        return _zero_masks(n, config)
    cm, post = refine_color_model(cm, rgb8, config.refine_iters)
    out = _combine(err255, post, config.combine_mode)
    q = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return [SoftMask(np.ascontiguousarray(m[:, :, None])) for m in q]


def discover_video(video: VideoSequence, config: TeacherConfig | None = None) -> list[SoftMask]:
    frames = video.load_frames()
    log.debug("discover %s: %d frames", video.video_id, len(frames))
    return discover(frames, config)
