"""
MIL bags from tight boxes

Positive bags are parallel crossing lines of each box at a grid of angles: one
family runs from the top edge to the bottom edge, the other from the left edge
to the right edge. Every pixel outside all class-c boxes is a singleton negative
bag; negatives are kept as a mask.
"""
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Literal, Sequence

import numpy as np

from ..config import BagConfig
from ..constants import CLASS_NAMES
from ..core.boxes import BBox, Dims, TightBoxLabel, pixel_centers

Family = Literal["top-bottom", "left-right"]


@dataclass(frozen=True, eq=False)
class Bag:
    """Pixels (n x 2 array of integer x, y) sampled along one crossing line"""

    pixels: np.ndarray
    class_id: int
    angle: float
    family: Family

    def __len__(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def xs(self) -> np.ndarray:
        return self.pixels[:, 0]

    @property
    def ys(self) -> np.ndarray:
        return self.pixels[:, 1]


def _edge_offsets(lo: float, hi: float, span: float, slope: float) -> np.ndarray:
    """Pixel-center offsets a on one edge whose line also ends on the opposite edge"""
    start = math.floor(lo)
    a = start + 0.5 + np.arange(0, math.ceil(hi) - start + 1, dtype=np.float64)
    end = a + span * slope
    keep = (a >= lo) & (a <= hi) & (end >= lo) & (end <= hi)
    return a[keep]


def _cells(lo: float, hi: float, limit: int) -> np.ndarray:
    """Integer cells whose centers lie in [lo, hi), clipped to [0, limit)"""
    first = max(0, math.ceil(lo - 0.5))
    last = min(limit, math.ceil(hi - 0.5))
    return np.arange(first, last, dtype=np.int64)


def crossing_lines(box: BBox, theta: float, dims: Dims, class_id: int = 1) -> List[Bag]:
    """
    Rasterized parallel crossing lines of a box at angle theta (degrees).

    Top-bottom lines take one pixel per row, left-right lines one pixel per
    column, by flooring the continuous line at the row/column center. Pixels are
    clipped to box and image; empty rasterizations are dropped.
    """
    h, w = dims
    slope = math.tan(math.radians(theta))
    bags: List[Bag] = []

    rows = _cells(box.yt, box.yb, h)
    if rows.size:
        for a in _edge_offsets(box.xl, box.xr, box.height, slope):
            xs = np.floor(a + (rows + 0.5 - box.yt) * slope).astype(np.int64)
            keep = (xs + 0.5 >= box.xl) & (xs + 0.5 < box.xr) & (xs >= 0) & (xs < w)
            if keep.any():
                pixels = np.stack([xs[keep], rows[keep]], axis=1)
                bags.append(Bag(pixels, class_id, float(theta), "top-bottom"))

    cols = _cells(box.xl, box.xr, w)
    if cols.size:
        for b in _edge_offsets(box.yt, box.yb, box.width, slope):
            ys = np.floor(b + (cols + 0.5 - box.xl) * slope).astype(np.int64)
            keep = (ys + 0.5 >= box.yt) & (ys + 0.5 < box.yb) & (ys >= 0) & (ys < h)
            if keep.any():
                pixels = np.stack([cols[keep], ys[keep]], axis=1)
                bags.append(Bag(pixels, class_id, float(theta), "left-right"))

    return bags


def positive_bags(label: TightBoxLabel, class_id: int, cfg: BagConfig, dims: Dims) -> List[Bag]:
    """All crossing lines of every class-c box at every grid angle, in label then angle order"""
    bags: List[Bag] = []
    for box in label.boxes_of(class_id):
        for theta in cfg.angles:
            bags.extend(crossing_lines(box, theta, dims, class_id))
    return bags


def negative_mask(label: TightBoxLabel, class_id: int, dims: Dims) -> np.ndarray:
    """1 where the pixel center lies outside every class-c box"""
    xc, yc = pixel_centers(dims)
    inside = np.zeros(dims, dtype=bool)
    for box in label.boxes_of(class_id):
        inside |= box.contains(xc, yc)
    return (~inside).astype(np.uint8)


class BagSet:
    """
    Packed bags: concatenated pixel coordinates plus segment offsets.

    Bag i owns pixels offsets[i]:offsets[i] + lengths[i]; every bag is
    non-empty so np.*.reduceat over offsets is valid.
    """

    def __init__(self, bags: Sequence[Bag], dims: Dims):
        self.dims = tuple(dims)
        self.class_ids = np.array([b.class_id for b in bags], dtype=np.int64)
        self.angles = np.array([b.angle for b in bags], dtype=np.float64)
        self.families = [b.family for b in bags]
        self.lengths = np.array([len(b) for b in bags], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.lengths)[:-1]]).astype(np.int64) \
            if bags else np.zeros(0, dtype=np.int64)
        if bags:
            pixels = np.concatenate([b.pixels for b in bags], axis=0)
        else:
            pixels = np.zeros((0, 2), dtype=np.int64)
        self.xs = pixels[:, 0]
        self.ys = pixels[:, 1]
        # segment id of every packed pixel
        self.segment = np.repeat(np.arange(len(bags), dtype=np.int64), self.lengths)

    @classmethod
    def from_label(cls, label: TightBoxLabel, class_id: int, cfg: BagConfig, dims: Dims) -> "BagSet":
        return cls(positive_bags(label, class_id, cfg, dims), dims)

    def __len__(self) -> int:
        return int(self.lengths.size)

    @property
    def flat_index(self) -> np.ndarray:
        return self.ys * self.dims[1] + self.xs

    def bags(self) -> Iterator[Bag]:
        for i, (start, n) in enumerate(zip(self.offsets, self.lengths)):
            pixels = np.stack([self.xs[start:start + n], self.ys[start:start + n]], axis=1)
            yield Bag(pixels, int(self.class_ids[i]), float(self.angles[i]), self.families[i])


def bags_to_records(bags: Sequence[Bag]) -> List[Dict]:
    """JSON-friendly dump of bags for debugging"""
    return [
        {
            "class": CLASS_NAMES.get(b.class_id, b.class_id),
            "angle": b.angle,
            "family": b.family,
            "pixels": b.pixels.tolist(),
        }
        for b in bags
    ]
