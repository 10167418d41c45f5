import numpy as np
import pytest

from cdr_system.config import SmoothMaxConfig
from cdr_system.errors import InvalidParameterError
from cdr_system.segmentation.smooth_max import (
    alpha_quasimax,
    alpha_softmax,
    hard_max,
    segment_max,
    smooth_max,
)

ALPHAS = (1.0, 4.0, 8.0, 16.0)


class TestHardMax:
    def test_value_and_gradient(self):
        value, grad = hard_max([0.2, 0.9, 0.5])
        assert value == 0.9
        assert grad.tolist() == [0.0, 1.0, 0.0]

    def test_singleton(self):
        value, grad = hard_max([0.3])
        assert value == 0.3
        assert grad.tolist() == [1.0]

    def test_first_index_on_ties(self):
        _, grad = hard_max([0.5, 0.5])
        assert grad.tolist() == [1.0, 0.0]

    def test_empty(self):
        with pytest.raises(InvalidParameterError):
            hard_max([])


class TestSmoothVariants:
    def test_softmax_value(self):
        value, _ = alpha_softmax([0.0, 1.0], 8.0)
        assert value == pytest.approx(0.999665, abs=1e-6)

    def test_quasimax_value(self):
        value, _ = alpha_quasimax([0.0, 1.0], 8.0)
        assert value == pytest.approx(0.913399, abs=1e-6)

    @pytest.mark.parametrize("fn", [alpha_softmax, alpha_quasimax])
    def test_constant_vector(self, fn):
        value, _ = fn([0.4, 0.4, 0.4], 8.0)
        assert value == pytest.approx(0.4, abs=1e-12)

    @pytest.mark.parametrize("fn", [alpha_softmax, alpha_quasimax])
    def test_gradient_sums_to_one(self, fn, rng):
        for i in range(1000):
            x = rng.random(rng.integers(1, 64))
            _, grad = fn(x, ALPHAS[i % len(ALPHAS)])
            assert grad.sum() == pytest.approx(1.0, abs=1e-12)

    def test_bounds(self, rng):
        for i in range(1000):
            x = rng.random(rng.integers(1, 32))
            alpha = ALPHAS[i % len(ALPHAS)]
            s, _ = alpha_softmax(x, alpha)
            q, _ = alpha_quasimax(x, alpha)
            assert x.min() - 1e-12 <= s <= x.max() + 1e-12
            assert x.max() - np.log(x.size) / alpha - 1e-12 <= q <= x.max() + 1e-12

    def test_large_alpha_is_stable(self):
        value, grad = alpha_softmax([0.0, 1.0, 300.0], 100.0)
        assert np.isfinite(value) and np.isfinite(grad).all()
        assert value == pytest.approx(300.0)

    def test_approximation_improves_with_alpha(self, rng):
        x = rng.random(20)
        alphas = [1.0, 2.0, 4.0, 8.0, 16.0]
        soft_gap = [x.max() - alpha_softmax(x, a)[0] for a in alphas]
        quasi_gap = [x.max() - alpha_quasimax(x, a)[0] for a in alphas]
        assert all(a >= b - 1e-12 for a, b in zip(soft_gap, soft_gap[1:]))
        assert all(a >= b - 1e-12 for a, b in zip(quasi_gap, quasi_gap[1:]))

    @pytest.mark.parametrize("alpha", [0.0, -1.0])
    def test_alpha_must_be_positive(self, alpha):
        with pytest.raises(InvalidParameterError):
            alpha_softmax([0.1, 0.2], alpha)

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidParameterError):
            alpha_quasimax([0.1, np.nan], 8.0)


class TestSegmentMax:
    @pytest.mark.parametrize("kind", ["hard", "alpha-softmax", "alpha-quasimax"])
    def test_matches_per_vector(self, kind, rng):
        cfg = SmoothMaxConfig(kind=kind, alpha=8.0)
        lengths = np.array([1, 5, 3, 12])
        offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        segment = np.repeat(np.arange(lengths.size), lengths)
        x = rng.random(lengths.sum())
        values, grad = segment_max(x, offsets, segment, lengths, cfg)
        for i, (start, n) in enumerate(zip(offsets, lengths)):
            v, g = smooth_max(x[start:start + n], cfg)
            assert values[i] == pytest.approx(v, abs=1e-12)
            assert np.allclose(grad[start:start + n], g, atol=1e-12)

    def test_no_segments(self):
        values, grad = segment_max(np.zeros(0), np.zeros(0, dtype=int), np.zeros(0, dtype=int),
                                   np.zeros(0, dtype=int), SmoothMaxConfig())
        assert values.size == 0 and grad.size == 0
