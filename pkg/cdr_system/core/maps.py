"""Logit / probability maps and shape checks"""
from typing import Tuple

import numpy as np
from scipy.special import expit, logit as _logit

from ..errors import ShapeMismatchError


def sigmoid(logits: np.ndarray) -> np.ndarray:
    """ProbabilityMap from LogitMap (elementwise, overflow-safe)"""
    return expit(np.asarray(logits, dtype=np.float64))


def logit(prob: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    p = np.clip(np.asarray(prob, dtype=np.float64), eps, 1.0 - eps)
    return _logit(p)


def sigmoid_grad(prob: np.ndarray) -> np.ndarray:
    """dp/dz expressed through p"""
    return prob * (1.0 - prob)


def check_map(p: np.ndarray, num_classes: int = None, dims: Tuple[int, int] = None) -> np.ndarray:
    """
    Validate a C x H x W map.

    Raises:
        ShapeMismatchError: wrong rank or shape
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 3:
        raise ShapeMismatchError(f"expected a C x H x W map, got shape {p.shape}")
    if num_classes is not None and p.shape[0] != num_classes:
        raise ShapeMismatchError(f"map has {p.shape[0]} classes, expected {num_classes}")
    if dims is not None and tuple(p.shape[1:]) != tuple(dims):
        raise ShapeMismatchError(f"map dims {p.shape[1:]} differ from {tuple(dims)}")
    return p


def check_field(v: np.ndarray, num_classes: int, dims: Tuple[int, int] = None) -> np.ndarray:
    """Validate a C x 4 x H x W regression field"""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 4:
        raise ShapeMismatchError(f"expected a C x 4 x H x W field, got shape {v.shape}")
    expected = (num_classes, 4) + (tuple(dims) if dims is not None else v.shape[2:])
    if v.shape != expected:
        raise ShapeMismatchError(f"regression field shape {v.shape}, expected {expected}")
    return v
