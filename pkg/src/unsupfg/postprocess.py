"""Soft mask -> binary mask -> connected components -> tight boxes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagery import SoftMask, resize_bilinear


@dataclass(frozen=True, order=True)
class BoundingBox:
    """Pixel box; (x0, y0) inclusive, (x1, y1) exclusive."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if min(self.x0, self.y0) < 0 or self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError(f"invalid box {self.as_list()}")

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, v) -> "BoundingBox":
        x0, y0, x1, y1 = (int(a) for a in v)
        return cls(x0, y0, x1, y1)

    @classmethod
    def of_mask(cls, mask: np.ndarray) -> "BoundingBox | None":
        ys, xs = np.nonzero(mask)
        if ys.size == 0:
            return None
        return cls(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


@dataclass
class Component:
    """A connected pixel set stored as row runs ``(y, x_start, x_end)``."""

    runs: np.ndarray  # (r, 3) int64, x_end exclusive
    area: int
    box: BoundingBox

    def to_mask(self, width: int, height: int) -> np.ndarray:
        out = np.zeros((height, width), dtype=bool)
        for y, xs, xe in self.runs:
            out[y, xs:xe] = True
        return out


def threshold_mask(mask: SoftMask | np.ndarray, theta: float) -> np.ndarray:
    values = mask.values if isinstance(mask, SoftMask) else np.asarray(mask)
    return values >= theta


def _row_runs(binary: np.ndarray):
    h, w = binary.shape
    padded = np.zeros((h, w + 2), dtype=np.int8)
    padded[:, 1:-1] = binary
    edges = np.diff(padded, axis=1)
    ys, starts = np.nonzero(edges == 1)
    _, ends = np.nonzero(edges == -1)
    return ys, starts, ends  # both sorted in scan order


def connected_components(binary: np.ndarray) -> list[Component]:
    """8-connected components, ordered by their first pixel in scan order."""
    binary = np.asarray(binary, dtype=bool)
    ys, starts, ends = _row_runs(binary)
    n = ys.size
    if n == 0:
        return []
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    # union runs of consecutive rows that touch, diagonal contact included
    row_first = np.searchsorted(ys, np.arange(binary.shape[0] + 1))
    for y in range(1, binary.shape[0]):
        a0, a1 = row_first[y - 1], row_first[y]
        b0, b1 = row_first[y], row_first[y + 1]
        i, j = a0, b0
        while i < a1 and j < b1:
            if starts[i] <= ends[j] and starts[j] <= ends[i]:
                ri, rj = find(i), find(j)
                if ri != rj:
                    # the smaller index (earlier in scan order) stays root
                    if ri < rj:
                        parent[rj] = ri
                    else:
                        parent[ri] = rj
            if ends[i] < ends[j]:
                i += 1
            else:
                j += 1

    roots = np.array([find(i) for i in range(n)])
    comps = []
    for root in np.unique(roots):  # roots are the first run of each component
        sel = np.nonzero(roots == root)[0]
        runs = np.stack([ys[sel], starts[sel], ends[sel]], axis=1).astype(np.int64)
        area = int((runs[:, 2] - runs[:, 1]).sum())
        box = BoundingBox(
            int(runs[:, 1].min()), int(runs[:, 0].min()), int(runs[:, 2].max()), int(runs[:, 0].max()) + 1
        )
        comps.append(Component(runs, area, box))
    return comps


@dataclass
class ScoredBox:
    box: BoundingBox
    score: float  # mean soft value over the component
    area: int


def fit_boxes(
    mask: SoftMask,
    original_w: int,
    original_h: int,
    theta_rel: float = 0.5,
    min_area_frac: float = 0.01,
) -> list[ScoredBox]:
    """Tight boxes around the significant components of an upsampled soft mask.

    Thresholding is relative to the mask maximum.  Boxes come back in
    original image coordinates, strongest component first.
    """
    up = resize_bilinear(mask, original_w, original_h).values
    peak = int(up.max())
    if peak == 0:
        return []
    comps = connected_components(up >= theta_rel * peak)
    floor = min_area_frac * original_w * original_h
    out = []
    for c in comps:
        if c.area < floor:
            continue
        total = sum(int(up[y, xs:xe].sum()) for y, xs, xe in c.runs)
        out.append(ScoredBox(c.box, total / c.area, c.area))
    # stable sort: equal scores keep scan order
    out.sort(key=lambda s: -s.score)
    return out
