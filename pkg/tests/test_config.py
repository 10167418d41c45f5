import json
from pathlib import Path

import pytest

from cdr_system.config import (
    BagConfig,
    NormalizerConfig,
    RunConfig,
    get_settings,
    load_run_config,
    read_config_file,
    write_resolved_config,
)
from cdr_system.constants import OC, OD
from cdr_system.errors import ConfigurationError

DEFAULT_CONFIG = Path(__file__).resolve().parents[1] / "config" / "config.yaml"


class TestDefaults:
    def test_hyperparameters(self):
        cfg = RunConfig()
        assert cfg.seg.lam == 10.0
        assert cfg.seg.focal.beta == 0.25 and cfg.seg.focal.gamma == 2.0
        assert cfg.seg.smoothmax.alpha == 8.0
        assert cfg.reg.sigma == 6.0
        assert cfg.reg.normalizers.values == {OC: 40.0, OD: 70.0}
        assert cfg.seg.bags.angles == [-40.0, -30.0, -20.0, -10.0, 0.0, 10.0, 20.0, 30.0, 40.0]

    def test_threshold_follows_smooth_max(self):
        assert RunConfig().threshold == 0.6
        quasi = load_run_config(overrides={"seg.smoothmax.kind": "alpha-quasimax"})
        assert quasi.threshold == 0.5

    def test_explicit_threshold_wins(self):
        cfg = load_run_config(overrides={"reg.selection.threshold": 0.7})
        assert cfg.threshold == 0.7

    def test_config_file_matches_defaults(self):
        assert load_run_config(DEFAULT_CONFIG) == RunConfig(n_samples=20, workers=1)


class TestLoading:
    def test_overrides_beat_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("seg:\n  lambda: 3.0\noptimizer:\n  max_steps: 50\n")
        cfg = load_run_config(path, {"optimizer.max_steps": 10})
        assert cfg.seg.lam == 3.0
        assert cfg.optimizer.max_steps == 10

    def test_json_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"reg": {"sigma": 3.0}}))
        assert load_run_config(path).reg.sigma == 3.0

    def test_none_override_ignored(self):
        assert load_run_config(overrides={"n_samples": None}).n_samples == 20

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_run_config(tmp_path / "nope.yaml")

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigurationError):
            read_config_file(path)

    @pytest.mark.parametrize("overrides", [
        {"seg.lambda": -1.0},
        {"seg.smoothmax.alpha": 0.0},
        {"reg.selection.threshold": 1.5},
        {"seg.neighbors": 6},
        {"synth.cdr_range": [0.5, 1.2]},
        {"optimizer.momentum": 1.0},
        {"unknown_key": 1},
    ])
    def test_validation(self, overrides):
        with pytest.raises(ConfigurationError):
            load_run_config(overrides=overrides)

    def test_bad_angle_grid(self):
        with pytest.raises(ValueError):
            BagConfig(theta_start=40.0, theta_end=-40.0)

    def test_normalizers_by_name(self):
        cfg = NormalizerConfig(values={"oc": 12.0, "od": 30.0})
        assert cfg.values == {OC: 12.0, OD: 30.0}
        with pytest.raises(ValueError):
            NormalizerConfig(values={"oc": 0.0})

    def test_resolved_config_echo(self, tmp_path):
        cfg = load_run_config(overrides={"seg.lambda": 2.5})
        path = write_resolved_config(cfg, tmp_path)
        echoed = json.loads(path.read_text())
        assert echoed["seg"]["lambda"] == 2.5
        assert echoed["reg"]["selection"]["threshold"] == 0.6
        assert RunConfig.model_validate(echoed) == cfg


class TestSettings:
    def test_env_prefix(self, monkeypatch):
        monkeypatch.setenv("CDR_WORKERS", "3")
        monkeypatch.setenv("CDR_LOG_LEVEL", "DEBUG")
        get_settings.cache_clear()
        try:
            settings = get_settings()
            assert settings.WORKERS == 3
            assert settings.LOG_LEVEL == "DEBUG"
        finally:
            get_settings.cache_clear()
