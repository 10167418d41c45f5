import numpy as np
import pytest

from cdr_system.config import GradcheckConfig
from cdr_system.diagnostics import SUITES, finite_difference, relative_error, run_gradcheck
from cdr_system.diagnostics import gradcheck
from cdr_system.errors import InvalidParameterError


def test_finite_difference_of_quadratic():
    x0 = np.array([1.0, -2.0, 0.5])
    grad = finite_difference(lambda x: float(np.sum(x ** 2)), x0)
    assert np.allclose(grad, 2 * x0, atol=1e-8)


def test_finite_difference_selected_coords():
    x0 = np.arange(6.0).reshape(2, 3)
    grad = finite_difference(lambda x: float(np.sum(3 * x)), x0, coords=[1, 4])
    assert grad.shape == (2, 3)
    assert np.allclose(grad.ravel(), [0, 3, 0, 0, 3, 0])


def test_relative_error():
    assert relative_error(np.ones(4), np.ones(4)) == 0.0
    assert relative_error(np.array([1.0, 0.0]), np.array([0.0, 0.0])) == pytest.approx(1.0)
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0


@pytest.mark.parametrize("suite", list(SUITES))
def test_suite_passes(suite):
    report = run_gradcheck(GradcheckConfig(instances=8, seed=5), [suite])
    assert report.passed, report.summary.to_dict(orient="records")
    assert len(report.instances) == 8


def test_report_layout():
    report = run_gradcheck(GradcheckConfig(instances=2), ["softmax", "smooth_l1"])
    assert report.summary["suite"].tolist() == ["softmax", "smooth_l1"]
    assert set(report.summary.columns) == {"suite", "instances", "max_rel_error", "passed"}
    assert set(report.instances.columns) == {"suite", "instance", "rel_error"}


def test_failing_tolerance_is_reported():
    report = run_gradcheck(GradcheckConfig(instances=3), ["softmax"], tolerance=1e-300)
    assert not report.passed
    assert report.failed == ["softmax"]


def test_deterministic():
    cfg = GradcheckConfig(instances=3, seed=9)
    a = run_gradcheck(cfg, ["unary", "regression"])
    b = run_gradcheck(cfg, ["unary", "regression"])
    assert a.instances.equals(b.instances)


def test_unknown_suite():
    with pytest.raises(InvalidParameterError):
        run_gradcheck(GradcheckConfig(instances=1), ["hessian"])


@pytest.mark.slow
def test_full_suites():
    report = run_gradcheck(GradcheckConfig())
    assert report.passed, report.failed
    assert (report.summary["instances"] == 100).all()


@pytest.fixture
def recorded_coords(monkeypatch):
    seen = []
    real = gradcheck.finite_difference

    def recording(func, x0, step=1e-5, coords=None):
        seen.append(coords)
        return real(func, x0, step, coords)

    monkeypatch.setattr(gradcheck, "finite_difference", recording)
    return seen


def test_map_suites_check_every_entry_by_default(recorded_coords):
    assert GradcheckConfig().all_coords
    run_gradcheck(GradcheckConfig(instances=2), ["unary", "pairwise", "seg", "regression"])
    assert len(recorded_coords) == 8
    assert all(c is None for c in recorded_coords)


def test_sampled_coords_when_all_coords_off(recorded_coords):
    run_gradcheck(GradcheckConfig(instances=2, all_coords=False, max_coords=8), ["seg"])
    assert all(c is not None and len(c) <= 8 for c in recorded_coords)


@pytest.mark.parametrize("suite, fn", [("softmax", "alpha_softmax"), ("quasimax", "alpha_quasimax")])
def test_alpha_cycles_over_fixed_set(monkeypatch, suite, fn):
    alphas = []
    real = getattr(gradcheck, fn)

    def recording(x, alpha):
        alphas.append(alpha)
        return real(x, alpha)

    monkeypatch.setattr(gradcheck, fn, recording)
    run_gradcheck(GradcheckConfig(instances=8), [suite])
    first_per_instance = [a for k, a in enumerate(alphas) if k == 0 or a != alphas[k - 1]]
    assert first_per_instance == [1.0, 4.0, 8.0, 16.0] * 2
