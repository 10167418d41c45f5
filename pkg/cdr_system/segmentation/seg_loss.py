"""
Weakly supervised segmentation loss

L_seg = sum_c [ unary_c + lambda * pairwise_c ], where unary_c is a focal loss on
bag predictions (smooth max over each positive bag, the pixel itself for each
singleton negative bag) and pairwise_c penalizes squared differences between
neighboring pixels. All gradients are with respect to the logit map.
"""
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np

from ..config import FocalConfig, SegLossConfig, SmoothMaxConfig
from ..constants import LOG_EPS
from ..core.boxes import Dims, TightBoxLabel
from ..core.maps import check_map, sigmoid, sigmoid_grad
from ..errors import InvalidParameterError, ShapeMismatchError
from .bags import Bag, BagSet, negative_mask
from .smooth_max import segment_max, smooth_max

# (dy, dx) of each unordered neighbor pair
NEIGHBOR_SHIFTS = {
    4: ((0, 1), (1, 0)),
    8: ((0, 1), (1, 0), (1, 1), (1, -1)),
}


def bag_prediction(p: np.ndarray, bag: Bag, sm: SmoothMaxConfig) -> float:
    """
    P_c(b): (smooth) maximum of the bag's pixel probabilities.

    The raw value is returned; quasimax can dip below 0 for near-zero bags and
    the focal terms clamp it into [LOG_EPS, 1 - LOG_EPS].
    """
    p = check_map(p)
    if len(bag) == 0:
        raise InvalidParameterError("bag prediction of an empty bag")
    h, w = p.shape[1:]
    if bag.xs.min() < 0 or bag.ys.min() < 0 or bag.xs.max() >= w or bag.ys.max() >= h:
        raise ShapeMismatchError("bag pixels fall outside the probability map")
    values = p[bag.class_id - 1, bag.ys, bag.xs]
    return smooth_max(values, sm)[0]


def _focal_positive(P: np.ndarray, focal: FocalConfig) -> Tuple[np.ndarray, np.ndarray]:
    """-beta (1-P)^gamma log P and its derivative (0 where clamped)"""
    beta, gamma = focal.beta, focal.gamma
    pc = np.clip(P, LOG_EPS, 1.0 - LOG_EPS)
    q = 1.0 - pc
    value = -beta * q ** gamma * np.log(pc)
    deriv = beta * gamma * q ** (gamma - 1.0) * np.log(pc) - beta * q ** gamma / pc
    deriv = np.where((P > LOG_EPS) & (P < 1.0 - LOG_EPS), deriv, 0.0)
    return value, deriv


def _focal_negative(p: np.ndarray, focal: FocalConfig) -> Tuple[np.ndarray, np.ndarray]:
    """-(1-beta) p^gamma log(1-p) and its derivative (0 where clamped)"""
    beta, gamma = focal.beta, focal.gamma
    pc = np.clip(p, LOG_EPS, 1.0 - LOG_EPS)
    value = -(1.0 - beta) * pc ** gamma * np.log1p(-pc)
    deriv = -(1.0 - beta) * (gamma * pc ** (gamma - 1.0) * np.log1p(-pc) - pc ** gamma / (1.0 - pc))
    deriv = np.where((p > LOG_EPS) & (p < 1.0 - LOG_EPS), deriv, 0.0)
    return value, deriv


def unary_loss(p: np.ndarray, pos: Union[BagSet, Sequence[Bag]], neg: np.ndarray,
               cfg: SegLossConfig, class_id: int) -> Tuple[float, np.ndarray]:
    """
    Focal MIL loss of one class, normalized by N+ = max(1, |B+|).

    Returns:
        (value, gradient with respect to the logits, same shape as p)
    """
    p = check_map(p)
    h, w = p.shape[1:]
    if not isinstance(pos, BagSet):
        pos = BagSet(list(pos), (h, w))
    neg = np.asarray(neg).astype(bool)
    if neg.shape != (h, w):
        raise ShapeMismatchError(f"negative mask shape {neg.shape} differs from map dims {(h, w)}")

    pc = p[class_id - 1]
    grad_p = np.zeros(h * w)
    total = 0.0

    if len(pos):
        flat = pos.flat_index
        bag_p, dbag = segment_max(pc.ravel()[flat], pos.offsets, pos.segment, pos.lengths,
                                  cfg.smoothmax)
        f, df = _focal_positive(bag_p, cfg.focal)
        total += float(np.sum(f))
        grad_p += np.bincount(flat, weights=df[pos.segment] * dbag, minlength=h * w)

    g, dg = _focal_negative(pc[neg], cfg.focal)
    total += float(np.sum(g))
    grad_p = grad_p.reshape(h, w)
    grad_p[neg] += dg

    n_pos = max(1, len(pos))
    grad = np.zeros_like(p)
    grad[class_id - 1] = grad_p / n_pos * sigmoid_grad(pc)
    return total / n_pos, grad


def pairwise_loss(p: np.ndarray, class_id: int, neighbors: int = 4) -> Tuple[float, np.ndarray]:
    """Mean squared difference over neighbor pairs, each unordered pair once"""
    p = check_map(p)
    q = p[class_id - 1]
    h, w = q.shape
    g = np.zeros_like(q)
    total = 0.0
    n_pairs = 0
    for dy, dx in NEIGHBOR_SHIFTS[neighbors]:
        if dy >= h or abs(dx) >= w:
            continue
        y0, y1 = slice(0, h - dy), slice(dy, h)
        if dx >= 0:
            x0, x1 = slice(0, w - dx), slice(dx, w)
        else:
            x0, x1 = slice(-dx, w), slice(0, w + dx)
        d = q[y1, x1] - q[y0, x0]
        total += float(np.sum(d * d))
        n_pairs += d.size
        g[y1, x1] += 2.0 * d
        g[y0, x0] -= 2.0 * d

    grad = np.zeros_like(p)
    if n_pairs == 0:
        return 0.0, grad
    grad[class_id - 1] = g / n_pairs * sigmoid_grad(q)
    return total / n_pairs, grad


@dataclass
class SegLossResult:
    value: float
    grad: np.ndarray
    unary: List[float] = field(default_factory=list)
    pairwise: List[float] = field(default_factory=list)


class WeakSegmentationLoss:
    """
    Segmentation loss of one image with bags precomputed from its label.

    Usage:
        loss = WeakSegmentationLoss(label, (H, W), cfg)
        result = loss.evaluate(logits)
    """

    def __init__(self, label: TightBoxLabel, dims: Dims, cfg: SegLossConfig):
        self.label = label
        self.dims = tuple(dims)
        self.cfg = cfg
        self.num_classes = label.num_classes
        self.positives = [
            BagSet.from_label(label, c, cfg.bags, self.dims) for c in range(1, self.num_classes + 1)
        ]
        self.negatives = [
            negative_mask(label, c, self.dims) for c in range(1, self.num_classes + 1)
        ]

    def evaluate_prob(self, p: np.ndarray) -> SegLossResult:
        p = check_map(p, self.num_classes, self.dims)
        grad = np.zeros_like(p)
        result = SegLossResult(0.0, grad)
        for c in range(1, self.num_classes + 1):
            u, gu = unary_loss(p, self.positives[c - 1], self.negatives[c - 1], self.cfg, c)
            pw, gp = pairwise_loss(p, c, self.cfg.neighbors)
            result.unary.append(u)
            result.pairwise.append(pw)
            result.value += u + self.cfg.lam * pw
            grad += gu + self.cfg.lam * gp
        return result

    def evaluate(self, logits: np.ndarray) -> SegLossResult:
        return self.evaluate_prob(sigmoid(logits))


def seg_loss(p: np.ndarray, label: TightBoxLabel, cfg: SegLossConfig) -> Tuple[float, np.ndarray]:
    """L_seg of a probability map; gradient with respect to the logits"""
    p = check_map(p, label.num_classes)
    result = WeakSegmentationLoss(label, p.shape[1:], cfg).evaluate_prob(p)
    return result.value, result.grad
