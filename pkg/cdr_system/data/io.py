"""
Dataset and prediction persistence

Layout of a dataset directory:
    dataset.json            metadata (sample count, dims, generator config)
    annotations.jsonl       {"id", "boxes": [{"class", "xl", "yt", "xr", "yb"}], "cdr"}
    images/<id>.pgm         8-bit grayscale (P5)
    masks/<id>_oc.pgm       0/255 masks, one per class
Predictions live under predictions/<id>/ (prediction.npz, prob_<class>.pgm, trace.csv).
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Union

import numpy as np
import pandas as pd
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..config import SynthConfig
from ..constants import (
    ANNOTATIONS_FILE,
    CLASS_NAMES,
    DATASET_META_FILE,
    IMAGES_DIR,
    MASKS_DIR,
    PREDICTIONS_DIR,
    VERSION,
)
from ..core.boxes import TightBoxLabel
from ..errors import CDRError, FileParseError, InvalidParameterError, ShapeMismatchError
from ..optim.direct_optimizer import OptimizationTrace
from .synth import Dataset, Sample

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class BoxRecord(BaseModel):
    model_config = ConfigDict(extra="ignore", populate_by_name=True)

    class_: Literal["oc", "od"] = Field(alias="class")
    xl: float
    yt: float
    xr: float
    yb: float


class AnnotationRecord(BaseModel):
    """One line of annotations.jsonl; unknown fields are ignored"""

    model_config = ConfigDict(extra="ignore")

    id: str
    boxes: List[BoxRecord]
    cdr: float


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------

def write_pgm(path: PathLike, array: np.ndarray) -> Path:
    path = Path(path)
    array = np.asarray(array)
    if array.ndim != 2:
        raise ShapeMismatchError(f"PGM needs a 2-D array, got shape {array.shape}")
    if array.dtype != np.uint8:
        raise InvalidParameterError(f"PGM needs uint8 pixels, got {array.dtype}")
    Image.fromarray(array).save(path, format="PPM")
    return path


def read_pgm(path: PathLike) -> np.ndarray:
    """
    Read an 8-bit grayscale PGM.

    Raises:
        FileParseError: missing, unreadable or not 8-bit grayscale
    """
    path = Path(path)
    if not path.exists():
        raise FileParseError(str(path), "file does not exist")
    try:
        with Image.open(path) as img:
            if img.mode != "L":
                raise FileParseError(str(path), f"expected 8-bit grayscale, got mode {img.mode}")
            return np.array(img, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as e:
        raise FileParseError(str(path), f"cannot decode image: {e}")


def prob_to_u8(prob: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(prob) * 255.0), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------

def _mask_path(root: Path, sid: str, class_id: int) -> Path:
    return root / MASKS_DIR / f"{sid}_{CLASS_NAMES[class_id]}.pgm"


def save_dataset(dataset: Dataset, root: PathLike) -> Path:
    root = Path(root)
    (root / IMAGES_DIR).mkdir(parents=True, exist_ok=True)
    (root / MASKS_DIR).mkdir(parents=True, exist_ok=True)

    lines = []
    for s in dataset:
        write_pgm(root / IMAGES_DIR / f"{s.sample_id}.pgm", s.image)
        for c in range(1, s.masks.shape[0] + 1):
            write_pgm(_mask_path(root, s.sample_id, c), (s.masks[c - 1] > 0).astype(np.uint8) * 255)
        record = {"id": s.sample_id, "boxes": s.label.to_records(), "cdr": s.cdr}
        lines.append(json.dumps(record))
    (root / ANNOTATIONS_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")

    meta = {
        "version": VERSION,
        "n_samples": len(dataset),
        "dims": list(dataset[0].dims) if len(dataset) else None,
        "synth": dataset.config.model_dump(mode="json") if dataset.config is not None else None,
    }
    (root / DATASET_META_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    logger.info("Saved %d samples to %s", len(dataset), root)
    return root


def read_annotations(path: PathLike) -> List[AnnotationRecord]:
    """
    Parse annotations.jsonl; blank lines are skipped.

    Raises:
        FileParseError: invalid JSON or record, with the 1-based line number
    """
    path = Path(path)
    if not path.exists():
        raise FileParseError(str(path), "annotation file does not exist")
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(AnnotationRecord.model_validate(json.loads(line)))
            except json.JSONDecodeError as e:
                raise FileParseError(str(path), e.msg, line=lineno, position=e.pos)
            except ValidationError as e:
                raise FileParseError(str(path), f"invalid annotation: {e.errors()[0]['msg']}",
                                     line=lineno)
    return records


def load_dataset(root: PathLike) -> Dataset:
    """
    Load a dataset written by save_dataset.

    Raises:
        FileParseError: malformed or missing files, or an annotation count that
            differs from dataset.json
    """
    root = Path(root)
    meta_path = root / DATASET_META_FILE
    meta: Dict = {}
    if meta_path.exists():
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise FileParseError(str(meta_path), e.msg, line=e.lineno, position=e.pos)

    records = read_annotations(root / ANNOTATIONS_FILE)
    expected = meta.get("n_samples")
    if expected is not None and expected != len(records):
        raise FileParseError(
            str(root / ANNOTATIONS_FILE),
            f"{len(records)} annotation lines but dataset.json lists {expected} samples",
        )

    samples = []
    for rec in records:
        image = read_pgm(root / IMAGES_DIR / f"{rec.id}.pgm")
        masks = np.stack([
            (read_pgm(_mask_path(root, rec.id, c)) > 127).astype(np.uint8)
            for c in sorted(CLASS_NAMES)
        ])
        try:
            label = TightBoxLabel.from_records(
                [b.model_dump(by_alias=True) for b in rec.boxes], num_classes=len(CLASS_NAMES)
            )
        except CDRError as e:
            raise FileParseError(str(root / ANNOTATIONS_FILE), f"sample {rec.id}: {e.message}")
        samples.append(Sample(rec.id, image, masks, label, rec.cdr))

    config = SynthConfig.model_validate(meta["synth"]) if meta.get("synth") else None
    logger.info("Loaded %d samples from %s", len(samples), root)
    return Dataset(samples, config)


# ---------------------------------------------------------------------------
# Predictions
# ---------------------------------------------------------------------------

@dataclass
class Prediction:
    sample_id: str
    prob: np.ndarray
    field: np.ndarray
    trace: Optional[OptimizationTrace] = None


def prediction_dir(root: PathLike, sid: str) -> Path:
    return Path(root) / PREDICTIONS_DIR / sid


def save_prediction(pred: Prediction, root: PathLike) -> Path:
    out = prediction_dir(root, pred.sample_id)
    out.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(out / "prediction.npz", prob=pred.prob, field=pred.field)
    for c in range(1, pred.prob.shape[0] + 1):
        name = CLASS_NAMES.get(c, str(c))
        write_pgm(out / f"prob_{name}.pgm", prob_to_u8(pred.prob[c - 1]))
    if pred.trace is not None:
        pred.trace.to_csv(out / "trace.csv")
    return out


def load_prediction(root: PathLike, sid: str) -> Prediction:
    out = prediction_dir(root, sid)
    path = out / "prediction.npz"
    if not path.exists():
        raise FileParseError(str(path), f"no prediction for sample {sid}")
    try:
        with np.load(path) as data:
            prob, field_ = data["prob"], data["field"]
    except (OSError, KeyError, ValueError) as e:
        raise FileParseError(str(path), f"cannot read prediction: {e}")
    trace = None
    if (out / "trace.csv").exists():
        trace = OptimizationTrace.from_frame(pd.read_csv(out / "trace.csv"))
    return Prediction(sid, prob, field_, trace)


def load_predictions(root: PathLike, ids: Iterable[str]) -> Dict[str, Prediction]:
    return {sid: load_prediction(root, sid) for sid in ids}
