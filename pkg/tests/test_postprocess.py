import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from unsupfg.evaluation import iou
from unsupfg.imagery import SoftMask
from unsupfg.postprocess import BoundingBox, connected_components, fit_boxes, threshold_mask


def flood_labels(binary):
    """Reference 8-connected labelling by breadth-first flood fill."""
    h, w = binary.shape
    labels = np.full((h, w), -1)
    n = 0
    for y in range(h):
        for x in range(w):
            if binary[y, x] and labels[y, x] < 0:
                stack = [(y, x)]
                labels[y, x] = n
                while stack:
                    cy, cx = stack.pop()
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            ny, nx = cy + dy, cx + dx
                            if 0 <= ny < h and 0 <= nx < w and binary[ny, nx] and labels[ny, nx] < 0:
                                labels[ny, nx] = n
                                stack.append((ny, nx))
                n += 1
    return labels, n


def test_threshold_boundaries():
    m = SoftMask.from_values(np.array([[10, 200], [0, 255]], np.uint8))
    assert threshold_mask(m, 0).all()
    assert not threshold_mask(m, 256).any()
    assert threshold_mask(m, 128).tolist() == [[False, True], [False, True]]


def test_components_trivial_cases():
    assert connected_components(np.zeros((4, 4), bool)) == []
    b = np.zeros((4, 4), bool)
    b[2, 1] = True
    (c,) = connected_components(b)
    assert c.area == 1 and c.box == BoundingBox(1, 2, 2, 3)
    b[3, 2] = True  # diagonal neighbour
    assert len(connected_components(b)) == 1


def test_components_u_shape_merges_late():
    b = np.zeros((5, 7), bool)
    b[0:4, 0] = True
    b[0:4, 6] = True
    b[4, 0:7] = True
    (c,) = connected_components(b)
    assert c.area == b.sum()
    np.testing.assert_array_equal(c.to_mask(7, 5), b)


@settings(max_examples=200, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 14), st.integers(1, 14))))
def test_components_match_flood_fill(b):
    comps = connected_components(b)
    labels, n = flood_labels(b)
    assert len(comps) == n
    total = 0
    for i, c in enumerate(comps):
        m = c.to_mask(b.shape[1], b.shape[0])
        # flood-fill labels are also numbered by first pixel in scan order
        np.testing.assert_array_equal(m, labels == i)
        assert c.area == m.sum()
        assert c.box == BoundingBox.of_mask(m)
        total += c.area
    assert total == b.sum()


def test_fit_boxes_centered_square():
    v = np.zeros((32, 32), np.uint8)
    v[8:24, 8:24] = 255
    boxes = fit_boxes(SoftMask.from_values(v), 128, 128)
    assert len(boxes) == 1
    assert iou(boxes[0].box, BoundingBox(32, 32, 96, 96)) >= 0.8


def test_fit_boxes_zero_mask():
    assert fit_boxes(SoftMask.from_values(np.zeros((32, 32), np.uint8)), 100, 80) == []


def test_fit_boxes_two_blobs():
    v = np.zeros((32, 32), np.uint8)
    v[2:10, 2:10] = 200
    v[20:30, 18:28] = 200
    boxes = fit_boxes(SoftMask.from_values(v), 64, 64)
    assert len(boxes) == 2
    assert sorted(b.box.as_list() for b in boxes) == [[4, 4, 20, 20], [36, 40, 56, 60]]


def test_fit_boxes_orders_by_mean_value_and_filters_small():
    v = np.zeros((32, 32), np.uint8)
    v[2:10, 2:10] = 150
    v[20:30, 18:28] = 250
    v[0, 31] = 250  # single cell, below the area floor once upsampled
    boxes = fit_boxes(SoftMask.from_values(v), 32, 32, min_area_frac=0.01)
    assert [b.box.x0 for b in boxes] == [18, 2]
    assert boxes[0].score > boxes[1].score


@settings(max_examples=30, deadline=None)
@given(arrays(np.uint8, (32, 32)), st.integers(16, 80), st.integers(16, 80))
def test_fit_boxes_invariants(v, w, h):
    boxes = fit_boxes(SoftMask.from_values(v), w, h)
    for b in boxes:
        assert 0 <= b.box.x0 < b.box.x1 <= w and 0 <= b.box.y0 < b.box.y1 <= h
        assert b.area >= 0.01 * w * h


def test_fit_boxes_scale_consistent():
    rng = np.random.default_rng(0)
    for _ in range(10):
        v = np.zeros((32, 32), np.uint8)
        x, y = rng.integers(2, 16, size=2)
        v[y : y + rng.integers(4, 14), x : x + rng.integers(4, 14)] = 255
        small = fit_boxes(SoftMask.from_values(v), 48, 40)
        big = fit_boxes(SoftMask.from_values(v), 96, 80)
        assert len(small) == len(big) == 1
        a, b = np.array(small[0].box.as_list()), np.array(big[0].box.as_list())
        assert np.abs(2 * a - b).max() <= 1


def test_box_validation():
    with pytest.raises(ValueError):
        BoundingBox(3, 0, 3, 4)
    assert BoundingBox.from_list([1, 2, 3, 4]).as_list() == [1, 2, 3, 4]
