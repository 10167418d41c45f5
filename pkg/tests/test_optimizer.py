import numpy as np
import pytest

from cdr_system.config import FocalConfig, OptimizerConfig, RegressionConfig, SegLossConfig, SmoothMaxConfig
from cdr_system.constants import OC, OD
from cdr_system.core.boxes import BBox, TightBoxLabel
from cdr_system.errors import InvalidParameterError, NonFiniteLossError
from cdr_system.optim import TRACE_COLUMNS, DirectOptimizer, OptimizationTrace, optimize_image
from cdr_system.regression.reg_loss import RegressionTargets
from cdr_system.segmentation.bags import negative_mask, positive_bags

DIMS = (24, 24)
NORMALIZERS = {OC: 8.0, OD: 16.0}


@pytest.fixture
def label():
    return TightBoxLabel.from_boxes([(BBox(8, 8, 16, 16), OC), (BBox(4, 3, 20, 21), OD)])


def _run(label, opt_cfg, seg_cfg=None, init_field=None, threshold=0.6):
    optimizer = DirectOptimizer(seg_cfg or SegLossConfig(), RegressionConfig(), opt_cfg,
                                threshold=threshold, normalizers=NORMALIZERS)
    return optimizer.run(label, DIMS, init_field)


class TestDirectOptimizer:
    def test_loss_decreases_with_line_search(self, label):
        result = _run(label, OptimizerConfig(max_steps=40, line_search=True))
        trace = result.trace
        assert trace.final_loss < trace.initial_loss
        assert all(b <= a for a, b in zip(trace.total, trace.total[1:]))

    def test_field_at_targets_keeps_reg_zero(self, label):
        targets = RegressionTargets(label, DIMS, NORMALIZERS, 0.6)
        result = _run(label, OptimizerConfig(max_steps=25), init_field=targets.field())
        assert result.trace.reg == [0.0] * len(result.trace.reg)
        assert np.array_equal(result.field, targets.field())
        assert result.trace.seg[-1] != result.trace.seg[0]

    def test_regression_converges(self, label):
        cfg = OptimizerConfig(max_steps=1500, stop_tolerance=0.0)
        result = _run(label, cfg)
        assert result.trace.stop_reason == "max_steps"
        assert result.trace.reg[-1] <= 1e-6

    def test_hard_max_recovers_box(self):
        box = BBox(3, 3, 9, 9)
        single = TightBoxLabel.from_boxes([(box, 1)], num_classes=1)
        seg_cfg = SegLossConfig(
            lam=0.0, smoothmax=SmoothMaxConfig(kind="hard"), focal=FocalConfig(beta=0.5, gamma=0.0)
        )
        optimizer = DirectOptimizer(seg_cfg, RegressionConfig(),
                                    OptimizerConfig(max_steps=300, stop_tolerance=0.0),
                                    threshold=0.6, normalizers={1: 6.0})
        result = optimizer.run(single, (12, 12))
        p = result.prob[0]
        for bag in positive_bags(single, 1, seg_cfg.bags, (12, 12)):
            assert p[bag.ys, bag.xs].max() >= 0.99
        assert p[negative_mask(single, 1, (12, 12)).astype(bool)].max() <= 0.01

    def test_deterministic(self, label):
        cfg = OptimizerConfig(max_steps=20, init_noise=0.5, seed=3)
        a, b = _run(label, cfg), _run(label, cfg)
        assert a.trace.total == b.trace.total
        assert np.array_equal(a.logits, b.logits)

    def test_seed_changes_noise(self, label):
        a = _run(label, OptimizerConfig(max_steps=1, init_noise=0.5, seed=3))
        b = _run(label, OptimizerConfig(max_steps=1, init_noise=0.5, seed=4))
        assert a.trace.initial_loss != b.trace.initial_loss

    def test_converged_stop(self, label):
        cfg = OptimizerConfig(max_steps=2000, stop_tolerance=1e-3, stop_patience=3)
        trace = _run(label, cfg).trace
        assert trace.stop_reason == "converged"
        assert trace.steps < 2000
        assert len(trace.total) == trace.steps + 1

    def test_non_finite_loss(self, label):
        bad = np.full((2, 4) + DIMS, np.nan)
        with pytest.raises(NonFiniteLossError) as err:
            _run(label, OptimizerConfig(max_steps=5), init_field=bad)
        assert err.value.step == 0
        assert err.value.trace.stop_reason == "non_finite"

    def test_empty_label(self):
        with pytest.raises(InvalidParameterError):
            _run(TightBoxLabel.from_boxes([]), OptimizerConfig(max_steps=5))

    def test_optimize_image(self, label):
        prob, field, trace = optimize_image(
            label, DIMS, SegLossConfig(), RegressionConfig(), OptimizerConfig(max_steps=5),
            threshold=0.6, normalizers=NORMALIZERS,
        )
        assert prob.shape == (2,) + DIMS
        assert field.shape == (2, 4) + DIMS
        assert ((prob > 0) & (prob < 1)).all()
        assert trace.steps == 5


class TestOptimizationTrace:
    def test_frame(self):
        trace = OptimizationTrace()
        trace.record(3.0, 2.0, 1.0)
        trace.record(2.5, 1.8, 0.7)
        df = trace.to_frame()
        assert list(df.columns) == TRACE_COLUMNS
        assert df["step"].tolist() == [0, 1]
        assert df["L"].tolist() == [3.0, 2.5]

    def test_csv(self, tmp_path):
        trace = OptimizationTrace()
        for k in range(4):
            trace.record(1.0 / (k + 1), 0.5 / (k + 1), 0.5 / (k + 1))
        path = trace.to_csv(tmp_path / "trace.csv")
        assert path.read_text().splitlines()[0] == "step,L,L_seg,L_reg"
