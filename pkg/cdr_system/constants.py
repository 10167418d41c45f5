"""
Constants for cdr_system.

Class ids, default hyperparameters and on-disk file names.
"""

VERSION = "1.0.0"

# Class ids used in CDR mode (channel index = class id - 1)
OC = 1
OD = 2
CLASS_NAMES = {OC: "oc", OD: "od"}
CLASS_IDS = {name: cid for cid, name in CLASS_NAMES.items()}
NUM_CLASSES = 2

# Default hyperparameters
DEFAULT_LAMBDA = 10.0
DEFAULT_BETA = 0.25
DEFAULT_GAMMA = 2.0
DEFAULT_ALPHA = 8.0
DEFAULT_SIGMA = 6.0
DEFAULT_THETA = (-40.0, 40.0, 10.0)
DEFAULT_NORMALIZERS = {OC: 40.0, OD: 70.0}
# Selection threshold T by smooth-max kind
DEFAULT_THRESHOLDS = {
    "hard": 0.6,
    "alpha-softmax": 0.6,
    "alpha-quasimax": 0.5,
}

GLAUCOMA_CDR_THRESHOLD = 0.6

# Clamp for focal-loss logarithms
LOG_EPS = 1e-7

# Dataset layout
ANNOTATIONS_FILE = "annotations.jsonl"
DATASET_META_FILE = "dataset.json"
IMAGES_DIR = "images"
MASKS_DIR = "masks"
PREDICTIONS_DIR = "predictions"
RESOLVED_CONFIG_FILE = "resolved_config.json"
