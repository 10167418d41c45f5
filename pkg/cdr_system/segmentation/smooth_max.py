"""
Hard maximum and its smooth approximations

Each function returns (value, gradient). The segment_* variant evaluates many
bags at once over packed arrays (see BagSet).
"""
from typing import Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from ..config import SmoothMaxConfig
from ..errors import InvalidParameterError


def _check_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise InvalidParameterError("smooth max of an empty vector")
    if not np.isfinite(x).all():
        raise InvalidParameterError("smooth max input contains non-finite values")
    return x


def _check_alpha(alpha: float) -> None:
    if not alpha > 0:
        raise InvalidParameterError(f"alpha must be > 0, got {alpha}")


def hard_max(x) -> Tuple[float, np.ndarray]:
    """Max element; gradient one-hot at the first maximal index"""
    x = _check_vector(x)
    i = int(np.argmax(x))
    grad = np.zeros_like(x)
    grad[i] = 1.0
    return float(x[i]), grad


def alpha_softmax(x, alpha: float) -> Tuple[float, np.ndarray]:
    """S_a(x) = sum x_i e^{a x_i} / sum e^{a x_i}"""
    x = _check_vector(x)
    _check_alpha(alpha)
    w = softmax(alpha * x)
    value = float(w @ x)
    return value, w * (1.0 + alpha * (x - value))


def alpha_quasimax(x, alpha: float) -> Tuple[float, np.ndarray]:
    """Q_a(x) = (log sum e^{a x_i} - log n) / a"""
    x = _check_vector(x)
    _check_alpha(alpha)
    value = float((logsumexp(alpha * x) - np.log(x.size)) / alpha)
    return value, softmax(alpha * x)


def smooth_max(x, cfg: SmoothMaxConfig) -> Tuple[float, np.ndarray]:
    if cfg.kind == "hard":
        return hard_max(x)
    if cfg.kind == "alpha-softmax":
        return alpha_softmax(x, cfg.alpha)
    return alpha_quasimax(x, cfg.alpha)


def segment_max(x: np.ndarray, offsets: np.ndarray, segment: np.ndarray,
                lengths: np.ndarray, cfg: SmoothMaxConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-segment (smooth) maximum of packed values.

    Args:
        x: packed values, segment i = x[offsets[i]:offsets[i] + lengths[i]]
        segment: segment id of every packed value
    Returns:
        (values per segment, gradient d value[segment[j]] / d x[j])
    """
    if offsets.size == 0:
        return np.zeros(0), np.zeros_like(x)
    m = np.maximum.reduceat(x, offsets)

    if cfg.kind == "hard":
        grad = np.zeros_like(x)
        idx = np.flatnonzero(x == m[segment])
        _, first = np.unique(segment[idx], return_index=True)
        grad[idx[first]] = 1.0
        return m, grad

    alpha = cfg.alpha
    e = np.exp(alpha * (x - m[segment]))
    z = np.add.reduceat(e, offsets)
    w = e / z[segment]
    if cfg.kind == "alpha-softmax":
        values = np.add.reduceat(w * x, offsets)
        return values, w * (1.0 + alpha * (x - values[segment]))
    values = m + (np.log(z) - np.log(lengths)) / alpha
    return values, w
