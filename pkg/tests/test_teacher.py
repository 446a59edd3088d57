import warnings

import numpy as np
import pytest

from unsupfg.imagery import Image
from unsupfg.jacobi import jacobi_eigh
from unsupfg.synthvideo import SynthConfig, generate_video
from unsupfg.teacher import (
    ColorModel,
    DegenerateVideoError,
    DegenerateVideoWarning,
    ReducedRankWarning,
    TeacherConfig,
    classify_pixels,
    color_bins,
    discover,
    error_map,
    fit_color_model,
    fit_pca,
    refine_color_model,
)


def _work(rng, n, h=10, w=10):
    return rng.random((n, h, w, 3))


def max_principal_sine(a: np.ndarray, b: np.ndarray) -> float:
    """Largest principal-angle sine between row spaces of orthonormal a, b."""
    resid = a - (a @ b.T) @ b
    return float(np.linalg.norm(resid, 2))


def dense_pca_oracle(x: np.ndarray, k: int) -> np.ndarray:
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / len(x)
    w, v = np.linalg.eigh(cov)
    return v[:, ::-1][:, :k].T


@pytest.mark.parametrize("seed", range(3))
def test_jacobi_matches_dense_solver(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((12, 12))
    a = a + a.T
    w, v = jacobi_eigh(a)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(a)[::-1], atol=1e-12)
    np.testing.assert_allclose(v.T @ v, np.eye(12), atol=1e-12)
    np.testing.assert_allclose(a @ v, v * w, atol=1e-11)


def test_jacobi_rejects_non_square():
    with pytest.raises(ValueError):
        jacobi_eigh(np.zeros((2, 3)))


@pytest.mark.parametrize("seed", range(3))
def test_pca_subspace_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    work = _work(rng, 50)  # D = 300
    cfg = TeacherConfig(work_w=10, work_h=10, k=6)
    model = fit_pca(None, cfg, work=work)
    oracle = dense_pca_oracle(work.reshape(50, -1), 6)
    assert max_principal_sine(model.components, oracle) < 1e-6
    assert np.all(np.diff(model.eigenvalues) <= 0)
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(6), atol=1e-6)


def test_identical_frames_reduce_rank():
    frame = np.random.default_rng(1).random((10, 10, 3))
    work = np.repeat(frame[None], 5, axis=0)
    with pytest.warns(ReducedRankWarning):
        model = fit_pca(None, TeacherConfig(work_w=10, work_h=10, k=3), work=work)
    assert model.k == 0 and model.notes
    np.testing.assert_allclose(model.mean, frame.ravel(), rtol=0, atol=1e-15)
    assert error_map(model, frame).max() < 1e-12


def test_exact_low_rank_reconstructs():
    rng = np.random.default_rng(2)
    basis = np.linalg.qr(rng.standard_normal((300, 3)))[0].T
    coeffs = rng.standard_normal((40, 3))
    work = (0.5 + coeffs @ basis * 0.1).reshape(40, 10, 10, 3)
    model = fit_pca(None, TeacherConfig(work_w=10, work_h=10, k=3, sigma=0), work=work)
    for f in work:
        assert error_map(model, f, sigma=0).max() < 1e-6


def test_reconstruction_error_non_increasing_in_k():
    rng = np.random.default_rng(3)
    work = _work(rng, 30)
    totals = []
    for k in range(1, 6):
        model = fit_pca(None, TeacherConfig(work_w=10, work_h=10, k=k), work=work)
        totals.append(sum((error_map(model, f, sigma=0) ** 2).sum() for f in work))
    assert all(b <= a + 1e-9 for a, b in zip(totals, totals[1:]))


def test_subsampling_respects_max_fit_frames():
    rng = np.random.default_rng(4)
    work = _work(rng, 40)
    with pytest.warns(ReducedRankWarning):
        model = fit_pca(None, TeacherConfig(work_w=10, work_h=10, k=20, max_fit_frames=8), work=work)
    assert model.k <= 8


def test_error_map_zero_inside_subspace():
    rng = np.random.default_rng(5)
    work = _work(rng, 20)
    model = fit_pca(None, TeacherConfig(work_w=10, work_h=10, k=4), work=work)
    mean = model.mean.reshape(10, 10, 3)
    assert error_map(model, mean).max() < 1e-12
    for alpha in (-3.0, 0.5, 10.0):
        frame = mean + alpha * model.components[0].reshape(10, 10, 3)
        assert error_map(model, frame).max() < 1e-9


def test_error_map_single_pixel_bump():
    rng = np.random.default_rng(6)
    # all variation confined to the left half, so the right half is off-subspace
    work = np.full((20, 16, 16, 3), 0.5)
    work[:, :, :8] += 0.1 * rng.standard_normal((20, 16, 8, 3))
    model = fit_pca(None, TeacherConfig(work_w=16, work_h=16, k=4), work=work)
    frame = model.mean.reshape(16, 16, 3).copy()
    frame[7, 11] += 0.4
    err = error_map(model, frame, sigma=2.0)
    assert np.unravel_index(err.argmax(), err.shape) == (7, 11)
    assert err[7, 11] > err[7, 13] > err[7, 15] > 0
    assert err.min() >= 0


def test_color_bins():
    assert color_bins(np.array([0, 0, 0])) == 0
    assert color_bins(np.array([0, 0, 32])) == 1
    assert color_bins(np.array([255, 255, 255])) == 511


def _two_color_video():
    cfg = SynthConfig(
        frame_w=64, frame_h=64, frames=40, area_min=0.15, area_max=0.2,
        object_color=(240, 8, 8), background_color=(60, 60, 190), pause_fraction=0.0,
    )
    return generate_video(cfg, 0)


def test_color_model_two_color_video():
    video = _two_color_video()
    cfg = TeacherConfig()
    model = fit_pca(video.images(), cfg)
    errs = np.stack([error_map(model, Image(f), cfg.sigma) for f in video.frames])
    errs *= 255.0 / errs.max()
    cm = fit_color_model(video.frames, errs, cfg)
    obj_bin = int(color_bins(np.array([240, 8, 8])))
    # the raw seeds mix the object with its reconstruction ghost; the object
    # color is still the single heaviest bin
    assert np.argmax(cm.fg_hist) == obj_bin and cm.fg_hist[obj_bin] > 0.4
    refined, post = refine_color_model(cm, video.frames, cfg.refine_iters)
    assert refined.fg_hist[obj_bin] > 0.9
    assert post.shape == video.frames.shape[:3]
    assert abs(cm.fg_hist.sum() - 1) < 1e-9 and abs(cm.bg_hist.sum() - 1) < 1e-9
    assert cm.fg_hist.min() > 0 and cm.bg_hist.min() > 0
    assert 0 < cm.prior_fg < 1


def test_color_model_degenerate():
    frames = np.zeros((3, 4, 4, 3), np.uint8)
    with pytest.raises(DegenerateVideoError):
        fit_color_model(frames, np.full((3, 4, 4), 7.0))


def test_color_model_smoothed_on_random_input():
    rng = np.random.default_rng(7)
    frames = rng.integers(0, 256, (3, 8, 8, 3), dtype=np.uint8)
    cm = fit_color_model(frames, rng.random((3, 8, 8)) * 255)
    for h in (cm.fg_hist, cm.bg_hist):
        assert abs(h.sum() - 1) < 1e-9 and h.min() > 0


def test_posterior_equal_hists_gives_prior():
    h = np.full(512, 1 / 512)
    post = classify_pixels(ColorModel(h, h, 0.3), np.random.default_rng(0).integers(0, 256, (5, 5, 3), dtype=np.uint8))
    np.testing.assert_allclose(post, 0.3)


def test_posterior_hand_model():
    fg = np.zeros(512)
    bg = np.zeros(512)
    fg[:2] = [0.9, 0.1]
    bg[:2] = [0.2, 0.8]
    frame = np.array([[[0, 0, 0], [0, 0, 32]]], dtype=np.uint8)
    post = classify_pixels(ColorModel(fg, bg, 0.5), frame)
    np.testing.assert_allclose(post[0], [0.9 / 1.1, 0.1 / 0.9])


def test_posterior_limit_and_monotone():
    rng = np.random.default_rng(8)
    fg = rng.random(512) + 1e-3
    bg = rng.random(512) + 1e-3
    bg[0] = 1e-15
    fg, bg = fg / fg.sum(), bg / bg.sum()
    cm = ColorModel(fg, bg, 0.2)
    bins = np.arange(512)
    colors = np.stack([(bins >> 6) << 5, ((bins >> 3) & 7) << 5, (bins & 7) << 5], axis=-1).astype(np.uint8)
    post = classify_pixels(cm, colors[None])[0]
    assert post[0] > 1 - 1e-9
    assert post.min() >= 0 and post.max() <= 1
    order = np.argsort(fg / bg, kind="stable")
    assert np.all(np.diff(post[order]) >= -1e-15)


def test_discover_static_video_zero_masks():
    frame = np.random.default_rng(9).integers(0, 256, (32, 32, 3), dtype=np.uint8)
    with pytest.warns(DegenerateVideoWarning):
        masks = discover([Image(frame)] * 6)
    assert len(masks) == 6
    assert all(m.values.max() == 0 for m in masks)


def test_discover_single_frame_is_degenerate():
    with pytest.warns(DegenerateVideoWarning):
        masks = discover([Image(np.zeros((8, 8, 3), np.uint8))])
    assert len(masks) == 1 and masks[0].values.max() == 0


def test_discover_rejects_mixed_sizes():
    with pytest.raises(ValueError):
        discover([Image(np.zeros((8, 8, 3), np.uint8)), Image(np.zeros((8, 9, 3), np.uint8))])


def test_discover_shapes_and_determinism():
    video = generate_video(SynthConfig(frames=20), 1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a = discover(video.images())
    b = discover(video.images())
    assert len(a) == 20
    assert all(m.width == 64 and m.height == 64 for m in a)
    assert all(x == y for x, y in zip(a, b))


def test_discover_moving_rectangle_iou():
    """Thresholded teacher masks overlap continuously moving objects."""
    from unsupfg.imagery import resize_bilinear

    cfg = SynthConfig(pause_fraction=0.0)
    ious = []
    for i in range(cfg.videos):
        video = generate_video(cfg, i)
        for m, gt in zip(discover(video.images()), video.gt_masks):
            pred = resize_bilinear(m, cfg.frame_w, cfg.frame_h).values >= 128
            ious.append((pred & gt).sum() / max(1, (pred | gt).sum()))
    assert np.mean(ious) >= 0.5


def test_config_validation():
    with pytest.raises(ValueError):
        TeacherConfig(k=0)
    with pytest.raises(ValueError):
        TeacherConfig(fg_seed_percent=100)
    with pytest.raises(ValueError):
        TeacherConfig(combine_mode="max")
