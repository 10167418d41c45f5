"""
Evaluation metrics

CDR error, glaucoma F1, dice, vertical-diameter MAD, grader-vs-grader tables and
the per-dataset evaluation that combines them.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.metrics import f1_score

from ..config import EvalConfig
from ..constants import CLASS_NAMES, GLAUCOMA_CDR_THRESHOLD, OC, OD
from ..core.boxes import BBox
from ..errors import CDRError, InvalidParameterError, ShapeMismatchError
from ..regression.eiou import select_positives
from .cdr import boxes_from_mask, cdr_from_boxes, predict_cdr

logger = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "sample_id", "cdr_pred", "cdr_true", "cdr_error", "dice_oc", "dice_od",
    "cdr_seg", "cdr_error_seg",
    "height_oc_pred", "height_oc_true", "height_od_pred", "height_od_true",
    "height_oc_seg", "height_od_seg", "failure", "fallback",
]


def cdr_error(pred: float, truth: float) -> float:
    if not (pred > 0 and truth > 0):
        raise InvalidParameterError(f"CDR values must be > 0, got {pred} and {truth}")
    return abs(pred - truth)


def _check_pairs(preds: Sequence, truths: Sequence) -> None:
    if len(preds) != len(truths):
        raise InvalidParameterError(f"length mismatch: {len(preds)} predictions, {len(truths)} truths")
    if len(preds) == 0:
        raise InvalidParameterError("at least one prediction is required")


def f1_glaucoma(preds: Sequence[float], truths: Sequence[float],
                threshold: float = GLAUCOMA_CDR_THRESHOLD) -> float:
    """F1 of the CDR >= threshold glaucoma call; 0 when there is no positive at all"""
    _check_pairs(preds, truths)
    y_pred = (np.asarray(preds, dtype=np.float64) >= threshold).astype(int)
    y_true = (np.asarray(truths, dtype=np.float64) >= threshold).astype(int)
    return float(f1_score(y_true, y_pred, zero_division=0))


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """2|A n B| / (|A| + |B|); 1 when both masks are empty"""
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"mask shapes differ: {a.shape} vs {b.shape}")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def vertical_diameter_mad(preds: Sequence[BBox], truths: Sequence[BBox]) -> float:
    """Mean absolute difference of box heights, in pixels"""
    _check_pairs(preds, truths)
    return float(np.mean([abs(p.height - t.height) for p, t in zip(preds, truths)]))


@dataclass
class PairwiseTable:
    """Grader i (row) scored against grader j (column) as ground truth"""

    table: pd.DataFrame
    averages: pd.Series

    def upper_triangle(self) -> pd.DataFrame:
        """Symmetric metrics: lower triangle blanked"""
        mask = np.triu(np.ones(self.table.shape, dtype=bool))
        return self.table.where(mask)


def pairwise_table(readings: Sequence[Sequence[Any]], metric: Callable[[Any, Any], float],
                   names: Optional[Sequence[str]] = None) -> PairwiseTable:
    """
    Cross-grader table of a per-item metric averaged over items.

    Args:
        readings: one list of values per grader, all of equal length
        metric: metric(value, reference) -> float
        names: grader names (default grader_1..grader_n)
    Returns:
        PairwiseTable; averages = mean of each row's off-diagonal entries
    """
    n = len(readings)
    if n < 2:
        raise InvalidParameterError(f"pairwise table needs at least 2 graders, got {n}")
    lengths = {len(r) for r in readings}
    if len(lengths) != 1 or 0 in lengths:
        raise InvalidParameterError(f"ragged or empty readings: lengths {sorted(lengths)}")
    names = list(names) if names is not None else [f"grader_{i + 1}" for i in range(n)]
    if len(names) != n:
        raise InvalidParameterError("one name per grader is required")

    values = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            values[i, j] = np.mean([metric(a, b) for a, b in zip(readings[i], readings[j])])
    table = pd.DataFrame(values, index=names, columns=names)
    off_diagonal = ~np.eye(n, dtype=bool)
    averages = pd.Series(
        [values[i][off_diagonal[i]].mean() for i in range(n)], index=names, name="average"
    )
    return PairwiseTable(table=table, averages=averages)


@dataclass
class MetricReport:
    """Aggregate metrics of one evaluated dataset"""

    n_samples: int
    n_failed: int
    cdr_error: float
    cdr_error_std: float
    f1: float
    n_fallback: int = 0
    dice: Dict[str, float] = field(default_factory=dict)
    mad: Dict[str, float] = field(default_factory=dict)
    cdr_error_seg: float = float("nan")
    f1_seg: float = float("nan")
    mad_seg: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _nan_row(sample_id: str) -> Dict[str, Any]:
    row: Dict[str, Any] = {col: float("nan") for col in METRIC_COLUMNS}
    row["sample_id"] = sample_id
    row["failure"] = ""
    row["fallback"] = ""
    return row


def evaluate_sample(sample, prob: np.ndarray, field_: np.ndarray,
                    normalizers: Mapping[int, float], cfg: EvalConfig,
                    threshold: Optional[float] = None) -> Dict[str, Any]:
    """
    One metrics row. Decode or empty-mask failures are recorded in the row
    instead of raised; classes decoded through the fallback are listed in
    the "fallback" column.

    The "selected" search restricts decoding to the eIoU positives of the
    ground-truth label, so it reads the label at prediction time. It measures
    the regression field where it was trained and is not a label-free estimate.

    Args:
        sample: object with sample_id, masks (C x H x W), label, cdr
        threshold: eIoU threshold, required when cfg.prediction_search == "selected"
    """
    row = _nan_row(sample.sample_id)
    row["cdr_true"] = sample.cdr
    gt_oc, gt_od = sample.label.box_of(OC), sample.label.box_of(OD)
    row["height_oc_true"] = gt_oc.height
    row["height_od_true"] = gt_od.height

    pred_masks = prob > cfg.mask_threshold
    row["dice_oc"] = dice(pred_masks[OC - 1], sample.masks[OC - 1])
    row["dice_od"] = dice(pred_masks[OD - 1], sample.masks[OD - 1])

    selected = None
    if cfg.prediction_search == "selected":
        if threshold is None:
            raise InvalidParameterError("selected prediction search needs the eIoU threshold")
        dims = prob.shape[1:]
        selected = np.stack([
            select_positives(sample.label, c, threshold, dims) for c in (OC, OD)
        ]).astype(bool)

    failures: List[str] = []
    try:
        result = predict_cdr(prob, field_, normalizers, selected,
                             fallback=cfg.fallback == "decodable")
        row["cdr_pred"] = result.cdr
        row["cdr_error"] = cdr_error(result.cdr, sample.cdr)
        row["fallback"] = ";".join(CLASS_NAMES[c] for c in result.fallback)
        row["height_oc_pred"] = result.box_oc.height
        row["height_od_pred"] = result.box_od.height
    except CDRError as e:
        failures.append(e.code)
        logger.warning("Sample %s: regression CDR failed: %s", sample.sample_id, e.message)

    try:
        seg_oc, seg_od = boxes_from_mask(prob, cfg.mask_threshold)
        row["cdr_seg"] = cdr_from_boxes(seg_oc, seg_od)
        row["cdr_error_seg"] = cdr_error(row["cdr_seg"], sample.cdr)
        row["height_oc_seg"] = seg_oc.height
        row["height_od_seg"] = seg_od.height
    except CDRError as e:
        failures.append(f"SEG_{e.code}")

    row["failure"] = ";".join(failures)
    return row


def _mad(df: pd.DataFrame, pred_col: str, true_col: str) -> float:
    ok = df[[pred_col, true_col]].dropna()
    if ok.empty:
        return float("nan")
    return float((ok[pred_col] - ok[true_col]).abs().mean())


def _f1(df: pd.DataFrame, pred_col: str, threshold: float) -> float:
    ok = df[[pred_col, "cdr_true"]].dropna()
    if ok.empty:
        return float("nan")
    return f1_glaucoma(ok[pred_col].tolist(), ok["cdr_true"].tolist(), threshold)


def summarize(df: pd.DataFrame, cfg: EvalConfig) -> MetricReport:
    errors = df["cdr_error"].dropna()
    return MetricReport(
        n_samples=int(len(df)),
        n_failed=int(df["cdr_pred"].isna().sum()),
        n_fallback=int((df["fallback"].fillna("") != "").sum()),
        cdr_error=float(errors.mean()) if len(errors) else float("nan"),
        cdr_error_std=float(errors.std(ddof=0)) if len(errors) else float("nan"),
        f1=_f1(df, "cdr_pred", cfg.glaucoma_threshold),
        dice={CLASS_NAMES[c]: float(df[f"dice_{CLASS_NAMES[c]}"].mean()) for c in (OC, OD)},
        mad={
            CLASS_NAMES[c]: _mad(df, f"height_{CLASS_NAMES[c]}_pred", f"height_{CLASS_NAMES[c]}_true")
            for c in (OC, OD)
        },
        cdr_error_seg=float(df["cdr_error_seg"].mean()),
        f1_seg=_f1(df, "cdr_seg", cfg.glaucoma_threshold),
        mad_seg={
            CLASS_NAMES[c]: _mad(df, f"height_{CLASS_NAMES[c]}_seg", f"height_{CLASS_NAMES[c]}_true")
            for c in (OC, OD)
        },
    )


def evaluate_dataset(samples: Sequence, predictions: Mapping[str, Tuple[np.ndarray, np.ndarray]],
                     normalizers: Mapping[int, float], cfg: EvalConfig,
                     threshold: Optional[float] = None,
                     workers: int = 1) -> Tuple[pd.DataFrame, MetricReport]:
    """
    Evaluate every sample that has a prediction.

    Args:
        predictions: sample_id -> (probability map, regression field)
    Returns:
        (per-sample DataFrame with METRIC_COLUMNS, aggregate MetricReport)
    """
    missing = [s.sample_id for s in samples if s.sample_id not in predictions]
    if missing:
        raise InvalidParameterError(f"no prediction for samples {missing[:5]}")
    rows = Parallel(n_jobs=workers)(
        delayed(evaluate_sample)(s, *predictions[s.sample_id], normalizers, cfg, threshold)
        for s in samples
    )
    df = pd.DataFrame(rows, columns=METRIC_COLUMNS)
    report = summarize(df, cfg)
    logger.info(
        "Evaluated %d samples: CDR error %.4f, F1 %.3f, dice oc %.3f od %.3f, %d failed, %d fallback",
        report.n_samples, report.cdr_error, report.f1, report.dice["oc"], report.dice["od"],
        report.n_failed, report.n_fallback,
    )
    return df, report
