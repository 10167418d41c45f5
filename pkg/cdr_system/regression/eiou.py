"""
Expected IoU and positive-sample selection

For a location at relative position (r1, r2) inside its matched box, eIoU is
the largest IoU between the box and any box centered at the location. With
rho = min(r, 1 - r) the maximum is reached at one of four candidate sizes, so it
has a closed form; eiou_oracle recomputes it by brute force.
"""
import logging

import numpy as np
import pandas as pd
from scipy.optimize import minimize

from ..config import EiouTableConfig
from ..core.boxes import BBox, Dims, TightBoxLabel, pixel_centers
from ..errors import InvalidParameterError
from .targets import match_grid

logger = logging.getLogger(__name__)


def eiou_array(r1, r2) -> np.ndarray:
    """Vectorized closed-form eIoU (no range checks)"""
    p1 = np.minimum(r1, 1.0 - np.asarray(r1, dtype=np.float64))
    p2 = np.minimum(r2, 1.0 - np.asarray(r2, dtype=np.float64))
    iou1 = 4.0 * p1 * p2
    iou2 = 2.0 * p1 / (2.0 * p1 * (1.0 - 2.0 * p2) + 1.0)
    iou3 = 2.0 * p2 / (2.0 * p2 * (1.0 - 2.0 * p1) + 1.0)
    iou4 = 1.0 / (4.0 * (1.0 - p1) * (1.0 - p2))
    return np.maximum(np.maximum(iou1, iou2), np.maximum(iou3, iou4))


def eiou(r1: float, r2: float) -> float:
    """
    Closed-form expected IoU.

    Raises:
        InvalidParameterError: r1 or r2 outside the open interval (0, 1)
    """
    for name, r in (("r1", r1), ("r2", r2)):
        if not (0.0 < r < 1.0):
            raise InvalidParameterError(f"{name} must lie in (0, 1), got {r}")
    return float(eiou_array(r1, r2))


def _overlap(r: float, size: np.ndarray) -> np.ndarray:
    """1-D overlap of [r - size/2, r + size/2] with [0, 1]"""
    return np.clip(np.minimum(1.0, r + size / 2.0) - np.maximum(0.0, r - size / 2.0), 0.0, None)


def _centered_iou(r1: float, r2: float, w, h):
    inter = _overlap(r1, w) * _overlap(r2, h)
    return inter / (w * h + 1.0 - inter)


def eiou_oracle(r1: float, r2: float, grid: int = 600, polish: bool = True) -> float:
    """
    Brute-force eIoU on a unit box: grid search over candidate sizes
    w, h in (0, 3] then an optional Nelder-Mead polish from the best grid point.
    """
    sizes = np.linspace(3.0 / grid, 3.0, grid)
    iw = _overlap(r1, sizes)
    ih = _overlap(r2, sizes)
    inter = np.outer(ih, iw)
    table = inter / (np.outer(sizes, sizes) + 1.0 - inter)
    k = int(np.argmax(table))
    best = float(table.flat[k])
    if not polish:
        return best
    hi, wi = divmod(k, grid)
    res = minimize(
        lambda z: -float(_centered_iou(r1, r2, z[0], z[1])),
        x0=np.array([sizes[wi], sizes[hi]]),
        method="Nelder-Mead",
        bounds=[(1e-9, 3.0), (1e-9, 3.0)],
        options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 2000},
    )
    return max(best, -float(res.fun))


def eiou_table(cfg: EiouTableConfig) -> pd.DataFrame:
    """Closed form vs oracle at random (r1, r2); columns r1, r2, eiou, oracle, abs_diff"""
    rng = np.random.default_rng(cfg.seed)
    r = rng.uniform(cfg.r_low, 1.0 - cfg.r_low, size=(cfg.n_points, 2))
    closed = eiou_array(r[:, 0], r[:, 1])
    oracle = np.array([eiou_oracle(a, b, cfg.grid, cfg.polish) for a, b in r])
    df = pd.DataFrame({
        "r1": r[:, 0],
        "r2": r[:, 1],
        "eiou": closed,
        "oracle": oracle,
        "abs_diff": np.abs(closed - oracle),
    })
    logger.info("eIoU table: %d points, max |closed - oracle| = %.3e", len(df), df["abs_diff"].max())
    return df


def select_positives(label: TightBoxLabel, class_id: int, threshold: float, dims: Dims) -> np.ndarray:
    """
    Locations kept for regression: matched to a class-c box and eIoU > T.

    r1, r2 are measured from the pixel center inside the matched box.
    """
    if not (0.0 <= threshold <= 1.0):
        raise InvalidParameterError(f"selection threshold must lie in [0, 1], got {threshold}")
    boxes = label.boxes_of(class_id)
    # any positive normalizer gives the same L1 ordering
    matched = match_grid(boxes, dims, 1.0)
    xc, yc = pixel_centers(dims)
    selected = np.zeros(dims, dtype=bool)
    for k, box in enumerate(boxes):
        region = matched == k
        if not region.any():
            continue
        r1 = (xc[region] - box.xl) / box.width
        r2 = (yc[region] - box.yt) / box.height
        selected[region] = eiou_array(r1, r2) > threshold
    return selected.astype(np.uint8)


def selection_area_fraction(threshold: float, size: int = 100) -> float:
    """Fraction of a size x size box selected at threshold T"""
    label = TightBoxLabel.from_boxes([(BBox(0, 0, size, size), 1)], num_classes=1)
    return float(select_positives(label, 1, threshold, (size, size)).mean())
