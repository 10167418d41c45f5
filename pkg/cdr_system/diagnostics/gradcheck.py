"""
Finite-difference gradient checks

Every analytic gradient in the package is compared with central differences on
random instances. relative error = |a - n| / max(|a|, |n|, 1e-8) over every
entry of the input, or over max_coords sampled entries when all_coords is off.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..config import BagConfig, FocalConfig, GradcheckConfig, RegressionConfig, SegLossConfig, SmoothMaxConfig
from ..core.boxes import BBox, TightBoxLabel
from ..core.maps import sigmoid
from ..errors import InvalidParameterError
from ..regression.reg_loss import BoxRegressionLoss, smooth_l1
from ..segmentation.bags import BagSet, negative_mask
from ..segmentation.seg_loss import WeakSegmentationLoss, pairwise_loss, unary_loss
from ..segmentation.smooth_max import alpha_quasimax, alpha_softmax

logger = logging.getLogger(__name__)

# Minimum distance of a test point from the smooth-L1 branch switch
_KINK_MARGIN = 1e-3

# Smooth-max sharpness, cycled over the instances of a suite
ALPHAS = (1.0, 4.0, 8.0, 16.0)


def finite_difference(func: Callable[[np.ndarray], float], x0: np.ndarray, step: float = 1e-5,
                      coords: Optional[Iterable[int]] = None) -> np.ndarray:
    """
    Central-difference gradient of func at x0.

    Args:
        coords: flat indices to check (default all); other entries stay 0
    """
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.zeros(x0.size)
    idx = range(x0.size) if coords is None else coords
    for j in idx:
        x = x0.copy().ravel()
        x[j] = x0.flat[j] + step
        fplus = func(x.reshape(x0.shape))
        x[j] = x0.flat[j] - step
        fminus = func(x.reshape(x0.shape))
        grad[j] = (fplus - fminus) / (2.0 * step)
    return grad.reshape(x0.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-8)
    return float(np.linalg.norm(a - n) / denom)


def _sample_coords(analytic: np.ndarray, limit: int, rng: np.random.Generator) -> np.ndarray:
    """Up to `limit` flat indices, half drawn from the nonzero gradient entries"""
    size = analytic.size
    if size <= limit:
        return np.arange(size)
    nonzero = np.flatnonzero(analytic)
    k = min(len(nonzero), limit // 2)
    picked = rng.choice(nonzero, size=k, replace=False) if k else np.zeros(0, dtype=np.int64)
    rest = np.setdiff1d(np.arange(size), picked)
    extra = rng.choice(rest, size=limit - k, replace=False)
    return np.sort(np.concatenate([picked, extra]))


def _check(func: Callable[[np.ndarray], float], analytic: np.ndarray, x0: np.ndarray,
           cfg: GradcheckConfig, rng: np.random.Generator, all_coords: Optional[bool] = None) -> float:
    if all_coords is None:
        all_coords = cfg.all_coords
    coords = None if all_coords else _sample_coords(analytic, cfg.max_coords, rng)
    numeric = finite_difference(func, x0, cfg.step, coords)
    if coords is None:
        return relative_error(analytic, numeric)
    return relative_error(analytic.ravel()[coords], numeric.ravel()[coords])


# ---------------------------------------------------------------------------
# Random instances
# ---------------------------------------------------------------------------

def _random_dims(rng: np.random.Generator, cfg: GradcheckConfig) -> Tuple[int, int]:
    return int(rng.integers(4, cfg.max_map_size + 1)), int(rng.integers(4, cfg.max_map_size + 1))


def _random_box(rng: np.random.Generator, dims: Tuple[int, int]) -> BBox:
    h, w = dims
    xl = rng.uniform(0, w - 2)
    yt = rng.uniform(0, h - 2)
    xr = rng.uniform(xl + 1.5, w)
    yb = rng.uniform(yt + 1.5, h)
    if rng.random() < 0.5:
        # integer-aligned boxes like the ones derived from masks
        xl, yt = np.floor(xl), np.floor(yt)
        xr, yb = max(np.ceil(xr), xl + 2), max(np.ceil(yb), yt + 2)
    return BBox(xl, yt, min(xr, w), min(yb, h))


def _random_label(rng: np.random.Generator, dims: Tuple[int, int], num_classes: int = 2) -> TightBoxLabel:
    boxes = []
    for c in range(1, num_classes + 1):
        for _ in range(int(rng.integers(1, 3))):
            boxes.append((_random_box(rng, dims), c))
    return TightBoxLabel.from_boxes(boxes, num_classes)


def _random_seg_cfg(rng: np.random.Generator, alpha: float) -> SegLossConfig:
    kind = str(rng.choice(["alpha-softmax", "alpha-quasimax"]))
    return SegLossConfig(
        lam=float(rng.uniform(0.0, 20.0)),
        smoothmax=SmoothMaxConfig(kind=kind, alpha=alpha),
        focal=FocalConfig(beta=float(rng.uniform(0.1, 0.9)), gamma=float(rng.choice([0.0, 1.0, 2.0]))),
        bags=BagConfig(theta_start=-40, theta_end=40, theta_step=float(rng.choice([10.0, 20.0, 40.0]))),
        neighbors=int(rng.choice([4, 8])),
    )


def _away_from_kink(x: np.ndarray, sigma: float) -> np.ndarray:
    k = 1.0 / sigma ** 2
    near = np.abs(np.abs(x) - k) < _KINK_MARGIN
    return np.where(near, x + 2.0 * _KINK_MARGIN * np.where(x >= 0, 1.0, -1.0), x)


# ---------------------------------------------------------------------------
# Suites: each returns the relative error of random instance i
# ---------------------------------------------------------------------------

def _suite_softmax(rng, cfg: GradcheckConfig, i: int) -> float:
    n = int(rng.integers(1, cfg.max_vector_length + 1))
    alpha = ALPHAS[i % len(ALPHAS)]
    x = rng.uniform(0.0, 1.0, n)
    _, g = alpha_softmax(x, alpha)
    return _check(lambda y: alpha_softmax(y, alpha)[0], g, x, cfg, rng, all_coords=True)


def _suite_quasimax(rng, cfg: GradcheckConfig, i: int) -> float:
    n = int(rng.integers(1, cfg.max_vector_length + 1))
    alpha = ALPHAS[i % len(ALPHAS)]
    x = rng.uniform(0.0, 1.0, n)
    _, g = alpha_quasimax(x, alpha)
    return _check(lambda y: alpha_quasimax(y, alpha)[0], g, x, cfg, rng, all_coords=True)


def _suite_unary(rng, cfg: GradcheckConfig, i: int) -> float:
    dims = _random_dims(rng, cfg)
    label = _random_label(rng, dims)
    seg_cfg = _random_seg_cfg(rng, ALPHAS[i % len(ALPHAS)])
    c = int(rng.integers(1, 3))
    pos = BagSet.from_label(label, c, seg_cfg.bags, dims)
    neg = negative_mask(label, c, dims)
    z = rng.normal(0.0, 1.5, (2,) + dims)
    _, g = unary_loss(sigmoid(z), pos, neg, seg_cfg, c)
    return _check(lambda y: unary_loss(sigmoid(y), pos, neg, seg_cfg, c)[0], g, z, cfg, rng)


def _suite_pairwise(rng, cfg: GradcheckConfig, i: int) -> float:
    dims = _random_dims(rng, cfg)
    c = int(rng.integers(1, 3))
    neighbors = int(rng.choice([4, 8]))
    z = rng.normal(0.0, 1.5, (2,) + dims)
    _, g = pairwise_loss(sigmoid(z), c, neighbors)
    return _check(lambda y: pairwise_loss(sigmoid(y), c, neighbors)[0], g, z, cfg, rng)


def _suite_seg(rng, cfg: GradcheckConfig, i: int) -> float:
    dims = _random_dims(rng, cfg)
    seg_cfg = _random_seg_cfg(rng, ALPHAS[i % len(ALPHAS)])
    loss = WeakSegmentationLoss(_random_label(rng, dims), dims, seg_cfg)
    z = rng.normal(0.0, 1.5, (2,) + dims)
    g = loss.evaluate(z).grad
    return _check(lambda y: loss.evaluate(y).value, g, z, cfg, rng)


def _suite_smooth_l1(rng, cfg: GradcheckConfig, i: int) -> float:
    n = int(rng.integers(1, cfg.max_vector_length + 1))
    sigma = float(rng.uniform(1.0, 8.0))
    x = _away_from_kink(rng.uniform(-1.0, 1.0, n), sigma)
    _, d = smooth_l1(x, sigma)
    return _check(lambda y: float(smooth_l1(y, sigma)[0].sum()), d, x, cfg, rng, all_coords=True)


def _suite_regression(rng, cfg: GradcheckConfig, i: int) -> float:
    dims = _random_dims(rng, cfg)
    label = _random_label(rng, dims)
    sigma = float(rng.uniform(1.0, 8.0))
    reg_cfg = RegressionConfig(sigma=sigma)
    threshold = float(rng.choice([0.0, 0.3, 0.5, 0.6]))
    normalizers = {1: float(rng.uniform(2.0, 8.0)), 2: float(rng.uniform(2.0, 8.0))}
    loss = BoxRegressionLoss(label, dims, reg_cfg, threshold, normalizers)
    delta = _away_from_kink(rng.uniform(-0.5, 0.5, (2, 4) + dims), sigma)
    v = loss.targets.targets - delta
    g = loss.evaluate(v).grad
    return _check(lambda y: loss.evaluate(y).value, g, v, cfg, rng)


SUITES: Dict[str, Callable[[np.random.Generator, GradcheckConfig, int], float]] = {
    "softmax": _suite_softmax,
    "quasimax": _suite_quasimax,
    "unary": _suite_unary,
    "pairwise": _suite_pairwise,
    "seg": _suite_seg,
    "smooth_l1": _suite_smooth_l1,
    "regression": _suite_regression,
}


@dataclass
class GradcheckReport:
    instances: pd.DataFrame
    summary: pd.DataFrame

    @property
    def failed(self) -> List[str]:
        return self.summary.loc[~self.summary["passed"], "suite"].tolist()

    @property
    def passed(self) -> bool:
        return not self.failed


def run_gradcheck(cfg: GradcheckConfig, suites: Optional[Iterable[str]] = None,
                  tolerance: Optional[float] = None) -> GradcheckReport:
    """
    Run the selected suites (default all).

    Returns:
        GradcheckReport with one row per instance and one summary row per suite
    """
    tol = cfg.tolerance if tolerance is None else tolerance
    names = list(SUITES) if suites is None else list(suites)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise InvalidParameterError(
            f"unknown gradcheck suites {unknown}", suggestion=f"Choose from {list(SUITES)}"
        )

    rows, summary = [], []
    for k, name in enumerate(names):
        rng = np.random.default_rng([cfg.seed, k])
        errors = [SUITES[name](rng, cfg, i) for i in range(cfg.instances)]
        rows.extend({"suite": name, "instance": i, "rel_error": e} for i, e in enumerate(errors))
        worst = float(np.max(errors))
        summary.append({"suite": name, "instances": len(errors), "max_rel_error": worst,
                        "passed": worst <= tol})
        logger.info("Gradcheck %-10s max relative error %.3e (%s)", name, worst,
                    "ok" if worst <= tol else "FAILED")
    return GradcheckReport(pd.DataFrame(rows), pd.DataFrame(summary))
