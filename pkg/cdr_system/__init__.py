"""
cdr_system - tight-box weakly supervised OC/OD segmentation and CDR estimation

Modules:
- core: boxes, tight-box labels, probability maps
- segmentation: MIL bags, smooth maximum, weak segmentation loss
- regression: class-specific box regression with eIoU selection
- optim: direct per-image optimization of the multi-task loss
- metrics: CDR post-processing and evaluation
- data: synthetic fundus-like dataset and file formats
- diagnostics: finite-difference gradient checks
"""
from .config import RunConfig, get_settings, load_run_config
from .constants import VERSION
from .core import BBox, TightBoxLabel, iou, mask_to_tight_box
from .data import Dataset, Sample, SynthGenerator, load_dataset, save_dataset
from .metrics import cdr_from_boxes, evaluate_dataset, predict_cdr
from .optim import DirectOptimizer, optimize_image
from .pipeline import ExperimentRunner
from .regression import BoxRegressionLoss, eiou, regression_loss
from .segmentation import WeakSegmentationLoss, seg_loss

__version__ = VERSION
