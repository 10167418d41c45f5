"""
Class-specific regression targets

A location inside a class-c box regresses the normalized distances to the four
sides of its matched box: t = ((x - xl), (y - yt), (xr - x), (yb - y)) / S_c.
"""
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..config import NormalizerConfig
from ..core.boxes import BBox, Dims, TightBoxLabel, pixel_centers
from ..errors import ConfigurationError, DegenerateBoxError, InvalidParameterError

Location = Tuple[float, float]


class RegressionTarget(NamedTuple):
    tl: float
    tt: float
    tr: float
    tb: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=np.float64)

    @property
    def l1(self) -> float:
        return float(np.abs(self.as_array()).sum())


def _check_normalizer(s: float) -> None:
    if not s > 0:
        raise InvalidParameterError(f"normalizer S_c must be > 0, got {s}")


def encode_target(location: Location, box: BBox, s: float) -> RegressionTarget:
    _check_normalizer(s)
    x, y = location
    return RegressionTarget((x - box.xl) / s, (y - box.yt) / s, (box.xr - x) / s, (box.yb - y) / s)


def decode_box(location: Location, offsets: Sequence[float], s: float) -> BBox:
    """
    Inverse of encode_target.

    Raises:
        DegenerateBoxError: decoded width or height is not positive
    """
    _check_normalizer(s)
    x, y = location
    tl, tt, tr, tb = (float(o) for o in offsets)
    xl, yt, xr, yb = x - s * tl, y - s * tt, x + s * tr, y + s * tb
    if not (xl < xr and yt < yb):
        raise DegenerateBoxError(
            f"offsets {(tl, tt, tr, tb)} at {location} decode to a degenerate box {(xl, yt, xr, yb)}"
        )
    return BBox(xl, yt, xr, yb)


def match_label(location: Location, boxes: Sequence[BBox], s: float) -> Optional[BBox]:
    """
    Matched box of one class: the containing box whose target has minimal L1
    norm, ties broken by list order; None outside all boxes.
    """
    x, y = location
    best, best_l1 = None, np.inf
    for box in boxes:
        if not box.contains(x, y):
            continue
        l1 = encode_target(location, box, s).l1
        if l1 < best_l1:
            best, best_l1 = box, l1
    return best


def target_grid(box: BBox, dims: Dims, s: float) -> np.ndarray:
    """Targets of every pixel center w.r.t. one box, shape 4 x H x W"""
    _check_normalizer(s)
    xc, yc = pixel_centers(dims)
    return np.stack([xc - box.xl, yc - box.yt, box.xr - xc, box.yb - yc]) / s


def match_grid(boxes: Sequence[BBox], dims: Dims, s: float) -> np.ndarray:
    """Index of the matched box for every pixel (H x W), -1 where unmatched"""
    if not boxes:
        return np.full(dims, -1, dtype=np.int64)
    xc, yc = pixel_centers(dims)
    l1 = np.stack([
        np.where(box.contains(xc, yc), np.abs(target_grid(box, dims, s)).sum(axis=0), np.inf)
        for box in boxes
    ])
    idx = np.argmin(l1, axis=0)
    return np.where(np.isfinite(l1.min(axis=0)), idx, -1)


def estimate_normalizers(labels: Iterable[TightBoxLabel], num_classes: int = 2) -> Dict[int, float]:
    """
    S_c = average of the mean vertical and the mean horizontal diameter of the
    class-c boxes. Classes without boxes are omitted.
    """
    heights: Dict[int, List[float]] = {c: [] for c in range(1, num_classes + 1)}
    widths: Dict[int, List[float]] = {c: [] for c in range(1, num_classes + 1)}
    for label in labels:
        for entry in label:
            heights[entry.class_id].append(entry.box.height)
            widths[entry.class_id].append(entry.box.width)
    return {
        c: float((np.mean(heights[c]) + np.mean(widths[c])) / 2.0)
        for c in heights if heights[c]
    }


def resolve_normalizers(cfg: NormalizerConfig, labels: Optional[Iterable[TightBoxLabel]] = None,
                        num_classes: int = 2) -> Dict[int, float]:
    """
    Normalizers for a run. In "estimated" mode classes seen in the labels take
    their dataset estimate; the configured values fill the rest.
    """
    values = {int(c): float(s) for c, s in cfg.values.items()}
    if cfg.mode == "estimated" and labels is not None:
        values.update(estimate_normalizers(labels, num_classes))
    missing = [c for c in range(1, num_classes + 1) if c not in values]
    if missing:
        raise ConfigurationError(f"no normalizer for classes {missing}")
    return values
