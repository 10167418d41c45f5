"""Shared fixtures"""
import numpy as np
import pytest

from cdr_system.config import RunConfig, SegLossConfig, SynthConfig, load_run_config
from cdr_system.constants import OC, OD
from cdr_system.core.boxes import BBox, TightBoxLabel


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cdr_label() -> TightBoxLabel:
    """OD 32 x 36 with a 16 x 16 OC inside, on a 48 x 48 image"""
    return TightBoxLabel.from_boxes([
        (BBox(16, 14, 32, 30), OC),
        (BBox(8, 6, 40, 42), OD),
    ])


@pytest.fixture
def small_dims():
    return (48, 48)


@pytest.fixture
def seg_cfg() -> SegLossConfig:
    return SegLossConfig()


@pytest.fixture
def small_synth() -> SynthConfig:
    return SynthConfig(
        height=48, width=48, od_diameter_range=(20.0, 28.0), center_jitter=2.0, seed=11
    )


@pytest.fixture
def tiny_run_cfg() -> RunConfig:
    """Small images and short optimization runs"""
    return load_run_config(overrides={
        "n_samples": 2,
        "workers": 1,
        "synth.height": 32,
        "synth.width": 32,
        "synth.od_diameter_range": [14.0, 18.0],
        "synth.center_jitter": 1.0,
        "reg.normalizers.values": {"oc": 8.0, "od": 16.0},
        "optimizer.max_steps": 60,
    })
