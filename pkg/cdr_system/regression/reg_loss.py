"""
Smooth-L1 box regression loss

L_reg = (1/C) sum_c (1/M_c) sum_{selected k} sum_j s(t_kcj - v_kcj); a class with
no selected location (M_c = 0) contributes 0.
"""
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Tuple, Union

import numpy as np

from ..config import NormalizerConfig, RegressionConfig
from ..core.boxes import Dims, TightBoxLabel
from ..core.maps import check_field
from ..errors import InvalidParameterError
from .eiou import select_positives
from .targets import match_grid, target_grid

Normalizers = Union[Mapping[int, float], NormalizerConfig]


def smooth_l1(x, sigma: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Elementwise smooth L1 and its derivative.

    0.5 (sigma x)^2 for |x| < 1/sigma^2, |x| - 1/(2 sigma^2) otherwise.
    """
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be > 0, got {sigma}")
    x = np.asarray(x, dtype=np.float64)
    s2 = sigma * sigma
    quad = np.abs(x) < 1.0 / s2
    value = np.where(quad, 0.5 * s2 * x * x, np.abs(x) - 0.5 / s2)
    deriv = np.where(quad, s2 * x, np.sign(x))
    return value, deriv


def _normalizer(normalizers: Normalizers, class_id: int) -> float:
    if isinstance(normalizers, NormalizerConfig):
        return normalizers.get(class_id)
    return float(normalizers[class_id])


class RegressionTargets:
    """
    Selected locations and their encoded targets, per class.

    Attributes:
        selected: bool array C x H x W
        targets: C x 4 x H x W, zero at unselected locations
        counts: M_c per class
    """

    def __init__(self, label: TightBoxLabel, dims: Dims, normalizers: Normalizers,
                 threshold: float):
        self.dims = tuple(dims)
        self.num_classes = label.num_classes
        self.threshold = float(threshold)
        h, w = self.dims
        self.selected = np.zeros((self.num_classes, h, w), dtype=bool)
        self.targets = np.zeros((self.num_classes, 4, h, w))
        self.normalizers = {}

        for c in range(1, self.num_classes + 1):
            s = _normalizer(normalizers, c)
            self.normalizers[c] = s
            boxes = label.boxes_of(c)
            if not boxes:
                continue
            sel = select_positives(label, c, threshold, self.dims).astype(bool)
            matched = match_grid(boxes, self.dims, s)
            for k, box in enumerate(boxes):
                region = sel & (matched == k)
                if region.any():
                    self.targets[c - 1][:, region] = target_grid(box, self.dims, s)[:, region]
            self.selected[c - 1] = sel

        self.counts = self.selected.reshape(self.num_classes, -1).sum(axis=1)

    def field(self, fill: float = 0.0) -> np.ndarray:
        """Targets at selected locations, `fill` elsewhere"""
        out = np.where(self.selected[:, None], self.targets, fill)
        return out.astype(np.float64)


@dataclass
class RegLossResult:
    value: float
    grad: np.ndarray
    per_class: List[float] = field(default_factory=list)


def _loss_from_targets(v: np.ndarray, targets: RegressionTargets, sigma: float) -> RegLossResult:
    v = check_field(v, targets.num_classes, targets.dims)
    grad = np.zeros_like(v)
    result = RegLossResult(0.0, grad)
    n_classes = targets.num_classes
    for c in range(n_classes):
        m = int(targets.counts[c])
        if m == 0:
            result.per_class.append(0.0)
            continue
        sel = targets.selected[c]
        diff = targets.targets[c][:, sel] - v[c][:, sel]
        val, deriv = smooth_l1(diff, sigma)
        class_value = float(val.sum()) / m
        result.per_class.append(class_value)
        result.value += class_value / n_classes
        grad[c][:, sel] = -deriv / (m * n_classes)
    return result


def regression_loss(v: np.ndarray, label: TightBoxLabel, normalizers: Normalizers,
                    threshold: float, sigma: float) -> Tuple[float, np.ndarray]:
    """
    L_reg of a regression field and its gradient with respect to v.

    Args:
        v: C x 4 x H x W predicted offsets
        threshold: eIoU selection threshold T
    """
    v = check_field(v, label.num_classes)
    targets = RegressionTargets(label, v.shape[2:], normalizers, threshold)
    result = _loss_from_targets(v, targets, sigma)
    return result.value, result.grad


class BoxRegressionLoss:
    """
    Regression loss of one image with selection and targets precomputed.

    Usage:
        loss = BoxRegressionLoss(label, (H, W), cfg, threshold=0.6)
        result = loss.evaluate(field)
    """

    def __init__(self, label: TightBoxLabel, dims: Dims, cfg: RegressionConfig,
                 threshold: Optional[float] = None,
                 normalizers: Optional[Mapping[int, float]] = None):
        if threshold is None:
            threshold = cfg.selection.threshold
        if threshold is None:
            raise InvalidParameterError("no selection threshold given or configured")
        self.cfg = cfg
        self.targets = RegressionTargets(
            label, dims, normalizers if normalizers is not None else cfg.normalizers, threshold
        )

    @property
    def num_classes(self) -> int:
        return self.targets.num_classes

    @property
    def counts(self) -> np.ndarray:
        return self.targets.counts

    def evaluate(self, v: np.ndarray) -> RegLossResult:
        return _loss_from_targets(v, self.targets, self.cfg.sigma)
