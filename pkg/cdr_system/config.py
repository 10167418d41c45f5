"""
Configuration for cdr_system.

Experiment configuration is a tree of pydantic models (one per module) rooted at
RunConfig. Process-level settings come from environment variables / .env.
"""
import json
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .constants import (
    CLASS_IDS,
    DEFAULT_ALPHA,
    DEFAULT_BETA,
    DEFAULT_GAMMA,
    DEFAULT_LAMBDA,
    DEFAULT_NORMALIZERS,
    DEFAULT_SIGMA,
    DEFAULT_THETA,
    DEFAULT_THRESHOLDS,
    GLAUCOMA_CDR_THRESHOLD,
    NUM_CLASSES,
    RESOLVED_CONFIG_FILE,
)
from .errors import ConfigurationError

# Load .env from the working directory
load_dotenv(dotenv_path=Path.cwd() / ".env")


class Settings(BaseSettings):
    """Process settings loaded from CDR_* environment variables."""

    LOG_LEVEL: str = "INFO"
    OUTPUT_DIR: str = "output"
    WORKERS: int = 1
    CONFIG_PATH: str = "config/config.yaml"

    model_config = SettingsConfigDict(env_prefix="CDR_", env_file=".env", extra="ignore")


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)


class BagConfig(_Frozen):
    """Angle grid (degrees) of the crossing-line positive bags"""

    theta_start: float = DEFAULT_THETA[0]
    theta_end: float = DEFAULT_THETA[1]
    theta_step: float = Field(DEFAULT_THETA[2], gt=0)

    @model_validator(mode="after")
    def _check_range(self):
        if not (-90.0 < self.theta_start <= self.theta_end < 90.0):
            raise ValueError("angles must satisfy -90 < theta_start <= theta_end < 90")
        return self

    @property
    def angles(self) -> List[float]:
        n = int(np.floor((self.theta_end - self.theta_start) / self.theta_step + 1e-9)) + 1
        return [float(self.theta_start + k * self.theta_step) for k in range(n)]


SmoothMaxKind = Literal["hard", "alpha-softmax", "alpha-quasimax"]


class SmoothMaxConfig(_Frozen):
    kind: SmoothMaxKind = "alpha-softmax"
    alpha: float = Field(DEFAULT_ALPHA, gt=0)


class FocalConfig(_Frozen):
    beta: float = Field(DEFAULT_BETA, ge=0, le=1)
    gamma: float = Field(DEFAULT_GAMMA, ge=0)


class SegLossConfig(_Frozen):
    """Weak segmentation loss: unary focal bag loss + lambda * pairwise loss"""

    lam: float = Field(DEFAULT_LAMBDA, ge=0, alias="lambda")
    smoothmax: SmoothMaxConfig = SmoothMaxConfig()
    focal: FocalConfig = FocalConfig()
    bags: BagConfig = BagConfig()
    # 4- or 8-connected neighbor pairs for the pairwise term
    neighbors: Literal[4, 8] = 4


class NormalizerConfig(_Frozen):
    """Per-class box normalizer S_c (pixels)"""

    mode: Literal["fixed", "estimated"] = "fixed"
    values: Dict[int, float] = Field(default_factory=lambda: dict(DEFAULT_NORMALIZERS))

    @field_validator("values", mode="before")
    @classmethod
    def _names_to_ids(cls, v: Any):
        if isinstance(v, dict):
            return {CLASS_IDS.get(k, k) if isinstance(k, str) else k: val for k, val in v.items()}
        return v

    @field_validator("values")
    @classmethod
    def _positive(cls, v: Dict[int, float]):
        for cid, s in v.items():
            if s <= 0:
                raise ValueError(f"normalizer for class {cid} must be > 0, got {s}")
        return v

    def get(self, class_id: int) -> float:
        if class_id not in self.values:
            raise ConfigurationError(f"no normalizer configured for class {class_id}")
        return float(self.values[class_id])


class SelectionConfig(_Frozen):
    """eIoU positive-sample selection; threshold None = default for the smooth-max kind"""

    threshold: Optional[float] = Field(None, ge=0, le=1)


class RegressionConfig(_Frozen):
    sigma: float = Field(DEFAULT_SIGMA, gt=0)
    normalizers: NormalizerConfig = NormalizerConfig()
    selection: SelectionConfig = SelectionConfig()
    # Weight of L_reg in the multi-task loss
    weight: float = Field(1.0, ge=0)


class OptimizerConfig(_Frozen):
    max_steps: int = Field(2000, ge=1)
    learning_rate: float = Field(200.0, gt=0)
    regression_learning_rate: float = Field(0.02, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    stop_tolerance: float = Field(1e-6, ge=0)
    stop_patience: int = Field(20, ge=1)
    logit_init: float = 0.0
    init_noise: float = Field(0.0, ge=0)
    seed: int = 7
    line_search: bool = False


class SynthConfig(_Frozen):
    height: int = Field(128, ge=8)
    width: int = Field(128, ge=8)
    od_diameter_range: Tuple[float, float] = (50.0, 80.0)
    cdr_range: Tuple[float, float] = (0.3, 0.9)
    aspect_range: Tuple[float, float] = (0.9, 1.1)
    center_jitter: float = Field(8.0, ge=0)
    oc_offset_bound: float = Field(0.1, ge=0, lt=1)
    intensity_background: int = Field(40, ge=0, le=255)
    intensity_od: int = Field(160, ge=0, le=255)
    intensity_oc: int = Field(220, ge=0, le=255)
    noise_std: float = Field(8.0, ge=0)
    blur_sigma: float = Field(1.0, ge=0)
    seed: int = 7

    @model_validator(mode="after")
    def _check_ranges(self):
        for name in ("od_diameter_range", "cdr_range", "aspect_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo <= 0:
                raise ValueError(f"{name} must satisfy 0 < low <= high, got {(lo, hi)}")
        if self.cdr_range[1] >= 1:
            raise ValueError("cdr_range must lie inside (0, 1)")
        return self

    @property
    def dims(self) -> Tuple[int, int]:
        return self.height, self.width


class EvalConfig(_Frozen):
    mask_threshold: float = Field(0.5, gt=0, lt=1)
    glaucoma_threshold: float = Field(GLAUCOMA_CDR_THRESHOLD, gt=0)
    prediction_search: Literal["global", "selected"] = "global"
    # "decodable": when the arg-max offsets do not decode, use the most probable
    # location whose offsets do; "none": record the failure
    fallback: Literal["none", "decodable"] = "decodable"


class SweepConfig(_Frozen):
    sigmas: List[float] = [3.0, 6.0, 8.0]
    thresholds: List[float] = [0.0, 0.5, 0.6, 0.7]
    n_samples: int = Field(4, ge=1)


class GradcheckConfig(_Frozen):
    instances: int = Field(100, ge=1)
    step: float = Field(1e-5, gt=0)
    tolerance: float = Field(1e-4, gt=0)
    max_map_size: int = Field(16, ge=2)
    max_vector_length: int = Field(256, ge=1)
    # False: check max_coords random entries of each map instead of all of them
    all_coords: bool = True
    max_coords: int = Field(64, ge=1)
    seed: int = 7


class EiouTableConfig(_Frozen):
    n_points: int = Field(1000, ge=1)
    grid: int = Field(600, ge=10)
    r_low: float = Field(0.01, gt=0, lt=0.5)
    polish: bool = True
    tolerance: float = Field(2e-3, gt=0)
    seed: int = 7


class RunConfig(_Frozen):
    """Fully resolved experiment configuration"""

    num_classes: int = Field(NUM_CLASSES, ge=1)
    n_samples: int = Field(20, ge=1)
    # None: fall back to CDR_WORKERS / CDR_OUTPUT_DIR
    workers: Optional[int] = Field(None, ge=1)
    out_dir: Optional[str] = None
    seg: SegLossConfig = SegLossConfig()
    reg: RegressionConfig = RegressionConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    synth: SynthConfig = SynthConfig()
    eval: EvalConfig = EvalConfig()
    sweep: SweepConfig = SweepConfig()
    gradcheck: GradcheckConfig = GradcheckConfig()
    eiou: EiouTableConfig = EiouTableConfig()

    @model_validator(mode="after")
    def _resolve_threshold(self):
        if self.reg.selection.threshold is None:
            t = DEFAULT_THRESHOLDS[self.seg.smoothmax.kind]
            selection = SelectionConfig(threshold=t)
            reg = self.reg.model_copy(update={"selection": selection})
            object.__setattr__(self, "reg", reg)
        return self

    @property
    def threshold(self) -> float:
        return float(self.reg.selection.threshold)

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json", by_alias=True), indent=2, sort_keys=True)


def _deep_merge(base: Dict, update: Dict) -> Dict:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def dotted_to_nested(overrides: Dict[str, Any]) -> Dict:
    """{'seg.lambda': 0} -> {'seg': {'lambda': 0}}"""
    nested: Dict = {}
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = nested
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return nested


def read_config_file(path: Union[str, Path]) -> Dict:
    """
    Read a YAML or JSON config file.

    Raises:
        ConfigurationError: missing file or not a mapping
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} does not exist")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"cannot parse config file {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must contain a mapping at top level")
    return data


def load_run_config(path: Optional[Union[str, Path]] = None,
                    overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Build a RunConfig: defaults < config file < dotted-key overrides.

    Raises:
        ConfigurationError: unreadable file or failed validation
    """
    data: Dict = read_config_file(path) if path else {}
    if overrides:
        data = _deep_merge(data, dotted_to_nested(overrides))
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {e}")


def write_resolved_config(cfg: RunConfig, out_dir: Union[str, Path]) -> Path:
    """Echo the resolved config next to a run's outputs"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / RESOLVED_CONFIG_FILE
    path.write_text(cfg.to_json() + "\n", encoding="utf-8")
    return path
