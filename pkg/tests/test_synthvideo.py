import numpy as np
import pytest

from unsupfg.dataset import read_manifest, resolve, score_mask
from unsupfg.imagery import SoftMask, read_mask, read_netpbm
from unsupfg.postprocess import BoundingBox
from unsupfg.synthvideo import SynthConfig, corrupt_masks, generate, generate_video, write_corpus


def test_same_seed_bit_identical():
    cfg = SynthConfig(frames=8, videos=2, test_videos=1)
    a, b = generate(cfg), generate(cfg, workers=3)
    for x, y in zip(a, b):
        assert x.video_id == y.video_id
        assert x.frames.tobytes() == y.frames.tobytes()
        assert x.gt_masks.tobytes() == y.gt_masks.tobytes()
    c = generate(SynthConfig(frames=8, videos=2, test_videos=1, seed=1))
    assert a[0].frames.tobytes() != c[0].frames.tobytes()


@pytest.mark.parametrize("shape", ["rectangle", "ellipse"])
def test_ground_truth_by_construction(shape):
    cfg = SynthConfig(frames=30, shape=shape)
    for i in range(4):
        v = generate_video(cfg, i)
        total = cfg.frame_w * cfg.frame_h
        for m, box in zip(v.gt_masks, v.gt_boxes):
            assert box == BoundingBox.of_mask(m)
            assert cfg.area_min <= m.sum() / total <= cfg.area_max
        assert v.gt_masks.dtype == bool


def test_trajectory_step_bound():
    cfg = SynthConfig(period_min=10, period_max=12)
    for i in range(5):
        v = generate_video(cfg, i)
        steps = np.linalg.norm(np.diff(v.origins, axis=0), axis=1)
        assert steps.max() <= cfg.step_bound()


def test_pause_freezes_object():
    cfg = SynthConfig(pause_fraction=0.5)
    v = generate_video(cfg, 0)
    still = (np.diff(v.origins, axis=0) == 0).all(axis=1)
    assert still.sum() >= 29


def test_split_ids():
    vids = generate(SynthConfig(frames=2, videos=2, test_videos=2))
    assert [v.video_id for v in vids] == ["train000", "train001", "test000", "test001"]
    assert [v.split for v in vids] == ["train", "train", "test", "test"]


def test_config_errors():
    with pytest.raises(ValueError):
        SynthConfig(area_min=0.3, area_max=0.2)
    with pytest.raises(ValueError):
        SynthConfig(frames=1)
    with pytest.raises(ValueError):
        generate_video(SynthConfig(frame_w=8, frame_h=64, area_min=0.5, area_max=0.9), 0)


def test_write_corpus(tmp_path):
    vids = generate(SynthConfig(frames=3, videos=1, test_videos=1))
    paths = write_corpus(vids, tmp_path)
    train = read_manifest(paths["train"])
    assert len(train) == 3 and len(read_manifest(paths["test"])) == 3
    e = train[1]
    assert read_netpbm(resolve(paths["train"], e.image_path)).data.tobytes() == vids[0].frames[1].tobytes()
    gt = read_mask(resolve(paths["train"], e.gt_mask_path)).values
    np.testing.assert_array_equal(gt > 0, vids[0].gt_masks[1])
    assert set(np.unique(gt)) <= {0, 255}
    assert e.gt_box == vids[0].gt_boxes[1]


def test_corrupt_masks():
    rng = np.random.default_rng(0)
    masks = [SoftMask.from_values(np.full((8, 8), 200, np.uint8)) for _ in range(100)]
    same, none = corrupt_masks(masks, 0.0, rng)
    assert none.size == 0 and all(a is b for a, b in zip(same, masks))
    out, chosen = corrupt_masks(masks, 0.5, np.random.default_rng(1))
    assert chosen.size == 50
    for i, (a, b) in enumerate(zip(out, masks)):
        if i in chosen:
            assert score_mask(a) <= 64
        else:
            assert a is b
    again, chosen2 = corrupt_masks(masks, 0.5, np.random.default_rng(1))
    assert (chosen == chosen2).all() and all(a == b for a, b in zip(out, again))
    full, _ = corrupt_masks(masks, 1.0, rng)
    assert all(score_mask(m) <= 64 for m in full)
