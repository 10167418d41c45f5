"""
Synthetic fundus-like samples

A bright axis-aligned OD ellipse containing a brighter OC ellipse on a dark
background. Labels are the tight boxes of the rasterized masks, so they are
exact; blur and noise are applied to the image only.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.ndimage import gaussian_filter

from ..config import SynthConfig
from ..constants import OC, OD
from ..core.boxes import TightBoxLabel, mask_to_tight_box, pixel_centers
from ..errors import ConfigurationError
from ..metrics.cdr import cdr_from_boxes

logger = logging.getLogger(__name__)


@dataclass
class Sample:
    """One image with its masks (C x H x W, 0/1), tight-box label and true CDR"""

    sample_id: str
    image: np.ndarray
    masks: np.ndarray
    label: TightBoxLabel
    cdr: float

    @property
    def dims(self):
        return self.image.shape


@dataclass
class Dataset:
    samples: List[Sample] = field(default_factory=list)
    config: Optional[SynthConfig] = None

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    def __getitem__(self, i: int) -> Sample:
        return self.samples[i]

    @property
    def labels(self) -> List[TightBoxLabel]:
        return [s.label for s in self.samples]

    def by_id(self) -> Dict[str, Sample]:
        return {s.sample_id: s for s in self.samples}

    def head(self, n: int) -> "Dataset":
        return Dataset(self.samples[:n], self.config)


def sample_id(index: int) -> str:
    return f"sample_{index:04d}"


def _ellipse(xc: np.ndarray, yc: np.ndarray, cx: float, cy: float, rx: float, ry: float) -> np.ndarray:
    return ((xc - cx) / rx) ** 2 + ((yc - cy) / ry) ** 2 <= 1.0


class SynthGenerator:
    """
    Deterministic generator: sample i only depends on (seed, i).

    Usage:
        gen = SynthGenerator(cfg)
        dataset = gen.generate(20, workers=4)
    """

    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg
        self._check_geometry()

    def _check_geometry(self) -> None:
        cfg = self.cfg
        max_h = cfg.od_diameter_range[1] + 2.0 * cfg.center_jitter + 2.0
        max_w = cfg.od_diameter_range[1] * cfg.aspect_range[1] + 2.0 * cfg.center_jitter + 2.0
        if max_h > cfg.height or max_w > cfg.width:
            raise ConfigurationError(
                f"OD up to {max_w:.1f} x {max_h:.1f} px (with jitter) does not fit a "
                f"{cfg.width} x {cfg.height} image",
                suggestion="Reduce synth.od_diameter_range or synth.center_jitter",
            )

    def sample(self, index: int, seed_seq: np.random.SeedSequence) -> Sample:
        cfg = self.cfg
        rng = np.random.default_rng(seed_seq)
        h, w = cfg.dims
        xc, yc = pixel_centers((h, w))

        # Optic disc
        od_ry = rng.uniform(*cfg.od_diameter_range) / 2.0
        od_rx = od_ry * rng.uniform(*cfg.aspect_range)
        cx = w / 2.0 + rng.uniform(-cfg.center_jitter, cfg.center_jitter)
        cy = h / 2.0 + rng.uniform(-cfg.center_jitter, cfg.center_jitter)
        od = _ellipse(xc, yc, cx, cy, od_rx, od_ry)

        # Optic cup, offset bounded so its vertical extent stays inside the disc
        cdr = rng.uniform(*cfg.cdr_range)
        bound = min(cfg.oc_offset_bound, 0.5 * (1.0 - cdr))
        oc_ry = cdr * od_ry
        oc_rx = min(cdr * od_rx * rng.uniform(*cfg.aspect_range), od_rx)
        ox = rng.uniform(-bound, bound) * od_rx
        oy = rng.uniform(-bound, bound) * od_ry
        oc = _ellipse(xc, yc, cx + ox, cy + oy, oc_rx, oc_ry) & od

        masks = np.zeros((2, h, w), dtype=np.uint8)
        masks[OC - 1] = oc
        masks[OD - 1] = od
        box_oc = mask_to_tight_box(oc)
        box_od = mask_to_tight_box(od)
        label = TightBoxLabel.from_boxes([(box_oc, OC), (box_od, OD)])

        image = np.full((h, w), float(cfg.intensity_background))
        image[od] = cfg.intensity_od
        image[oc] = cfg.intensity_oc
        if cfg.blur_sigma > 0:
            image = gaussian_filter(image, cfg.blur_sigma)
        if cfg.noise_std > 0:
            image = image + rng.normal(0.0, cfg.noise_std, size=image.shape)
        image = np.clip(np.rint(image), 0, 255).astype(np.uint8)

        return Sample(
            sample_id=sample_id(index),
            image=image,
            masks=masks,
            label=label,
            cdr=cdr_from_boxes(box_oc, box_od),
        )

    def generate(self, n: int, workers: int = 1) -> Dataset:
        if n < 1:
            raise ConfigurationError(f"number of samples must be >= 1, got {n}")
        seeds = np.random.SeedSequence(self.cfg.seed).spawn(n)
        samples = Parallel(n_jobs=workers)(
            delayed(self.sample)(i, seeds[i]) for i in range(n)
        )
        logger.info("Generated %d synthetic samples (%d x %d, seed %d)",
                    n, self.cfg.height, self.cfg.width, self.cfg.seed)
        return Dataset(list(samples), self.cfg)


def generate(cfg: SynthConfig, n: int, workers: int = 1) -> Dataset:
    return SynthGenerator(cfg).generate(n, workers)
