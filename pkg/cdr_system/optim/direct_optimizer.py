"""
Direct optimization of per-image predictions

Minimizes L = L_seg + w * L_reg by momentum gradient descent over a logit map
(C x H x W) and a regression field (C x 4 x H x W) instead of network weights.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..config import OptimizerConfig, RegressionConfig, SegLossConfig
from ..core.boxes import Dims, TightBoxLabel
from ..core.maps import check_field, sigmoid
from ..errors import InvalidParameterError, NonFiniteLossError
from ..regression.reg_loss import BoxRegressionLoss
from ..segmentation.seg_loss import WeakSegmentationLoss

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["step", "L", "L_seg", "L_reg"]

# Backtracking line search
_MAX_HALVINGS = 40


@dataclass
class OptimizationTrace:
    """Per-step losses (step 0 = initial point) and why the run stopped"""

    total: List[float] = field(default_factory=list)
    seg: List[float] = field(default_factory=list)
    reg: List[float] = field(default_factory=list)
    steps: int = 0
    stop_reason: str = ""

    def record(self, total: float, seg: float, reg: float) -> None:
        self.total.append(float(total))
        self.seg.append(float(seg))
        self.reg.append(float(reg))

    @property
    def initial_loss(self) -> float:
        return self.total[0]

    @property
    def final_loss(self) -> float:
        return self.total[-1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "step": np.arange(len(self.total)),
            "L": self.total,
            "L_seg": self.seg,
            "L_reg": self.reg,
        }, columns=TRACE_COLUMNS)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format="%.10g")
        return path

    @classmethod
    def from_frame(cls, df: pd.DataFrame, stop_reason: str = "") -> "OptimizationTrace":
        return cls(
            total=df["L"].astype(float).tolist(),
            seg=df["L_seg"].astype(float).tolist(),
            reg=df["L_reg"].astype(float).tolist(),
            steps=max(0, len(df) - 1),
            stop_reason=stop_reason,
        )


@dataclass
class OptimizationResult:
    prob: np.ndarray
    field: np.ndarray
    logits: np.ndarray
    trace: OptimizationTrace


class DirectOptimizer:
    """
    Momentum gradient descent on the multi-task loss of one image.

    Regression steps are scaled per class by C * M_c so that the effective step
    on each selected entry does not depend on how many locations a class has.

    Usage:
        opt = DirectOptimizer(seg_cfg, reg_cfg, opt_cfg, threshold=0.6)
        result = opt.run(label, (128, 128))
    """

    def __init__(self, seg_cfg: SegLossConfig, reg_cfg: RegressionConfig, opt_cfg: OptimizerConfig,
                 threshold: Optional[float] = None,
                 normalizers: Optional[Mapping[int, float]] = None):
        self.seg_cfg = seg_cfg
        self.reg_cfg = reg_cfg
        self.cfg = opt_cfg
        self.threshold = threshold
        self.normalizers = normalizers

    def _losses(self, seg: WeakSegmentationLoss, reg: BoxRegressionLoss,
                z: np.ndarray, v: np.ndarray):
        s = seg.evaluate(z)
        r = reg.evaluate(v)
        w = self.reg_cfg.weight
        return s.value + w * r.value, s.value, r.value, s.grad, w * r.grad

    def run(self, label: TightBoxLabel, dims: Dims,
            init_field: Optional[np.ndarray] = None) -> OptimizationResult:
        """
        Optimize the predictions of one labeled image.

        Raises:
            InvalidParameterError: empty label
            NonFiniteLossError: loss became NaN/inf; carries the partial trace
        """
        if len(label) == 0:
            raise InvalidParameterError("cannot optimize an image without tight boxes")
        cfg = self.cfg
        dims = tuple(dims)
        n_classes = label.num_classes

        seg = WeakSegmentationLoss(label, dims, self.seg_cfg)
        reg = BoxRegressionLoss(label, dims, self.reg_cfg, self.threshold, self.normalizers)

        # Initial point
        z = np.full((n_classes,) + dims, float(cfg.logit_init))
        if cfg.init_noise > 0:
            rng = np.random.default_rng(cfg.seed)
            z = z + cfg.init_noise * rng.standard_normal(z.shape)
        if init_field is not None:
            v = check_field(init_field, n_classes, dims).copy()
        else:
            v = np.zeros((n_classes, 4) + dims)

        precond = (n_classes * np.maximum(reg.counts, 1)).astype(np.float64)[:, None, None, None]

        trace = OptimizationTrace()
        total, l_seg, l_reg, gz, gv = self._losses(seg, reg, z, v)
        trace.record(total, l_seg, l_reg)
        if not np.isfinite(total):
            trace.stop_reason = "non_finite"
            raise NonFiniteLossError(0, trace)

        vel_z = np.zeros_like(z)
        vel_v = np.zeros_like(v)
        quiet = 0
        trace.stop_reason = "max_steps"

        for step in range(1, cfg.max_steps + 1):
            step_z = cfg.momentum * vel_z - cfg.learning_rate * gz
            step_v = cfg.momentum * vel_v - cfg.regression_learning_rate * precond * gv

            new = self._losses(seg, reg, z + step_z, v + step_v)
            if cfg.line_search and not new[0] <= total:
                # Restart from a plain gradient step and halve it until the loss does not rise
                scale = 1.0
                accepted = False
                for _ in range(_MAX_HALVINGS):
                    step_z = -scale * cfg.learning_rate * gz
                    step_v = -scale * cfg.regression_learning_rate * precond * gv
                    new = self._losses(seg, reg, z + step_z, v + step_v)
                    if new[0] <= total:
                        accepted = True
                        break
                    scale *= 0.5
                if not accepted:
                    trace.steps = step - 1
                    trace.stop_reason = "line_search_stalled"
                    break

            new_total = new[0]
            if not np.isfinite(new_total):
                trace.record(new_total, new[1], new[2])
                trace.steps = step
                trace.stop_reason = "non_finite"
                logger.error("Non-finite loss at step %d", step)
                raise NonFiniteLossError(step, trace)

            z = z + step_z
            v = v + step_v
            vel_z, vel_v = step_z, step_v
            rel = abs(total - new_total) / max(abs(total), 1e-12)
            total, l_seg, l_reg, gz, gv = new
            trace.record(total, l_seg, l_reg)
            trace.steps = step

            quiet = quiet + 1 if rel < cfg.stop_tolerance else 0
            if quiet >= cfg.stop_patience:
                trace.stop_reason = "converged"
                break

        logger.debug(
            "Optimization stopped after %d steps (%s): L %.6g -> %.6g",
            trace.steps, trace.stop_reason, trace.initial_loss, trace.final_loss,
        )
        return OptimizationResult(prob=sigmoid(z), field=v, logits=z, trace=trace)


def optimize_image(label: TightBoxLabel, dims: Dims, seg_cfg: SegLossConfig,
                   reg_cfg: RegressionConfig, opt_cfg: OptimizerConfig,
                   threshold: Optional[float] = None,
                   normalizers: Optional[Mapping[int, float]] = None,
                   init_field: Optional[np.ndarray] = None
                   ) -> Tuple[np.ndarray, np.ndarray, OptimizationTrace]:
    """Functional wrapper: (probability map, regression field, trace)"""
    result = DirectOptimizer(seg_cfg, reg_cfg, opt_cfg, threshold, normalizers).run(
        label, dims, init_field
    )
    return result.prob, result.field, result.trace
