"""Experiment runner - generate, optimize, evaluate and the combined runs"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .config import RunConfig, get_settings, write_resolved_config
from .constants import CLASS_NAMES, OC, OD
from .data.io import Prediction, load_dataset, load_predictions, save_dataset, save_prediction
from .data.synth import Dataset, Sample, generate
from .errors import CDRError, InvalidParameterError
from .metrics.cdr import predict_cdr
from .metrics.evaluation import MetricReport, dice, evaluate_dataset, pairwise_table
from .optim.direct_optimizer import DirectOptimizer
from .regression.reg_loss import RegressionTargets
from .regression.targets import resolve_normalizers
from .segmentation.bags import BagSet, bags_to_records, negative_mask

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

OPTIMIZE_COLUMNS = ["sample_id", "steps", "stop_reason", "initial_loss", "final_loss",
                    "final_seg", "final_reg"]


def write_json(path: PathLike, data: Any) -> Path:
    """Deterministic JSON (sorted keys, no timestamps)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _optimize_sample(sample: Sample, cfg: RunConfig, normalizers: Mapping[int, float]) -> Prediction:
    optimizer = DirectOptimizer(cfg.seg, cfg.reg, cfg.optimizer, cfg.threshold, normalizers)
    result = optimizer.run(sample.label, sample.dims)
    return Prediction(sample.sample_id, result.prob, result.field, result.trace)


def _optimization_frame(predictions: Sequence[Prediction]) -> pd.DataFrame:
    rows = []
    for p in predictions:
        t = p.trace
        rows.append({
            "sample_id": p.sample_id,
            "steps": t.steps,
            "stop_reason": t.stop_reason,
            "initial_loss": t.initial_loss,
            "final_loss": t.final_loss,
            "final_seg": t.seg[-1],
            "final_reg": t.reg[-1],
        })
    return pd.DataFrame(rows, columns=OPTIMIZE_COLUMNS)


class ExperimentRunner:
    """
    Runs the batch experiments of one resolved configuration.

    Usage:
        runner = ExperimentRunner(load_run_config("config/config.yaml"))
        report = runner.demo("output/demo")
    """

    def __init__(self, cfg: RunConfig, workers: Optional[int] = None):
        self.cfg = cfg
        self.workers = workers or cfg.workers or get_settings().WORKERS

    # ------------------------------------------------------------------
    # Single stages
    # ------------------------------------------------------------------

    def generate(self, n: Optional[int] = None) -> Dataset:
        return generate(self.cfg.synth, n or self.cfg.n_samples, self.workers)

    def normalizers(self, dataset: Dataset) -> Dict[int, float]:
        return resolve_normalizers(self.cfg.reg.normalizers, dataset.labels, self.cfg.num_classes)

    def optimize(self, dataset: Dataset) -> List[Prediction]:
        normalizers = self.normalizers(dataset)
        logger.info("Optimizing %d samples (T=%.2f, S=%s, %d workers)",
                    len(dataset), self.cfg.threshold, normalizers, self.workers)
        return list(Parallel(n_jobs=self.workers)(
            delayed(_optimize_sample)(s, self.cfg, normalizers) for s in dataset
        ))

    def evaluate(self, dataset: Dataset, predictions: Mapping[str, Prediction]):
        pairs = {sid: (p.prob, p.field) for sid, p in predictions.items()}
        return evaluate_dataset(
            dataset.samples, pairs, self.normalizers(dataset), self.cfg.eval,
            threshold=self.cfg.threshold, workers=self.workers,
        )

    # ------------------------------------------------------------------
    # Commands with on-disk outputs
    # ------------------------------------------------------------------

    def run_generate(self, out: PathLike, n: Optional[int] = None) -> Dataset:
        dataset = self.generate(n)
        save_dataset(dataset, out)
        write_resolved_config(self.cfg, out)
        return dataset

    def run_optimize(self, data_dir: PathLike, out: PathLike,
                     n: Optional[int] = None) -> List[Prediction]:
        dataset = load_dataset(data_dir)
        if n is not None:
            dataset = dataset.head(n)
        predictions = self.optimize(dataset)
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        for p in predictions:
            save_prediction(p, out)
        frame = _optimization_frame(predictions)
        frame.to_csv(out / "optimize.csv", index=False, float_format="%.10g")
        normalizers = self.normalizers(dataset)
        write_json(out / "normalizers.json", {CLASS_NAMES[c]: s for c, s in normalizers.items()})
        write_resolved_config(self.cfg, out)
        decreased = int((frame["final_loss"] < frame["initial_loss"]).sum())
        logger.info("Loss decreased on %d/%d samples", decreased, len(frame))
        return predictions

    def run_evaluate(self, data_dir: PathLike, pred_root: PathLike, out: PathLike,
                     n: Optional[int] = None) -> MetricReport:
        dataset = load_dataset(data_dir)
        if n is not None:
            dataset = dataset.head(n)
        predictions = load_predictions(pred_root, [s.sample_id for s in dataset])
        df, report = self.evaluate(dataset, predictions)
        self._write_metrics(out, df, report)
        write_resolved_config(self.cfg, out)
        return report

    def _write_metrics(self, out: PathLike, df: pd.DataFrame, report: MetricReport,
                       extra: Optional[Dict] = None) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        df.to_csv(out / "metrics.csv", index=False, float_format="%.10g")
        summary = report.to_dict()
        if extra:
            summary.update(extra)
        write_json(out / "summary.json", summary)

    def demo(self, out: PathLike, n: Optional[int] = None) -> Dict[str, Any]:
        """gen -> optimize -> eval in one output directory"""
        out = Path(out)
        dataset = self.run_generate(out / "data", n)
        predictions = self.optimize(dataset)
        for p in predictions:
            save_prediction(p, out)
        frame = _optimization_frame(predictions)
        frame.to_csv(out / "optimize.csv", index=False, float_format="%.10g")

        df, report = self.evaluate(dataset, {p.sample_id: p for p in predictions})
        extra = {
            "loss_decreased": int((frame["final_loss"] < frame["initial_loss"]).sum()),
            "mean_steps": float(frame["steps"].mean()),
            "converged": int((frame["stop_reason"] == "converged").sum()),
            "threshold": self.cfg.threshold,
        }
        self._write_metrics(out, df, report, extra)
        write_resolved_config(self.cfg, out)
        summary = report.to_dict()
        summary.update(extra)
        return summary

    def calibrate(self, out: PathLike, runs: int = 3, n: Optional[int] = None) -> Dict[str, Any]:
        """
        Repeated demo runs on consecutive data seeds, and the acceptance
        thresholds derived from them: dice floor = min observed - 0.02, CDR
        error ceiling = max observed + 0.005.
        """
        if runs < 1:
            raise InvalidParameterError(f"calibration needs at least one run, got {runs}")
        out = Path(out)
        observed = []
        for k in range(runs):
            seed = self.cfg.synth.seed + k
            cfg = self.cfg.model_copy(update={"synth": self.cfg.synth.model_copy(update={"seed": seed})})
            summary = ExperimentRunner(cfg, self.workers).demo(out / f"run_{k}", n)
            observed.append({
                "seed": seed,
                "dice_oc": summary["dice"]["oc"],
                "dice_od": summary["dice"]["od"],
                "cdr_error": summary["cdr_error"],
                "n_failed": summary["n_failed"],
                "n_fallback": summary["n_fallback"],
                "loss_decreased": summary["loss_decreased"],
            })
            logger.info("Calibration run %d (seed %d): dice oc %.3f od %.3f, CDR error %.3g",
                        k, seed, observed[-1]["dice_oc"], observed[-1]["dice_od"],
                        observed[-1]["cdr_error"])
        frame = pd.DataFrame(observed)
        result = {
            "runs": observed,
            "min_dice_oc": float(frame["dice_oc"].min() - 0.02),
            "min_dice_od": float(frame["dice_od"].min() - 0.02),
            "max_cdr_error": float(frame["cdr_error"].max() + 0.005),
        }
        write_json(out / "calibration.json", result)
        return result

    def sweep(self, out: PathLike, n: Optional[int] = None) -> pd.DataFrame:
        """Sensitivity runs over sigma x T on one generated dataset"""
        dataset = self.generate(n or self.cfg.sweep.n_samples)
        rows = []
        for sigma in self.cfg.sweep.sigmas:
            for t in self.cfg.sweep.thresholds:
                reg = self.cfg.reg.model_copy(update={
                    "sigma": float(sigma),
                    "selection": self.cfg.reg.selection.model_copy(update={"threshold": float(t)}),
                })
                runner = ExperimentRunner(self.cfg.model_copy(update={"reg": reg}), self.workers)
                predictions = runner.optimize(dataset)
                _, report = runner.evaluate(dataset, {p.sample_id: p for p in predictions})
                counts = np.mean([
                    RegressionTargets(s.label, s.dims, runner.normalizers(dataset), t).counts
                    for s in dataset
                ], axis=0)
                rows.append({
                    "sigma": float(sigma),
                    "threshold": float(t),
                    "cdr_error": report.cdr_error,
                    "f1": report.f1,
                    "dice_oc": report.dice["oc"],
                    "dice_od": report.dice["od"],
                    "mad_oc": report.mad["oc"],
                    "mad_od": report.mad["od"],
                    "n_failed": report.n_failed,
                    "n_fallback": report.n_fallback,
                    "selected_oc": float(counts[OC - 1]),
                    "selected_od": float(counts[OD - 1]),
                })
                logger.info("Sweep sigma=%.1f T=%.2f: CDR error %.4f", sigma, t, report.cdr_error)
        frame = pd.DataFrame(rows)
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out / "sweep.csv", index=False, float_format="%.10g")
        write_resolved_config(self.cfg, out)
        return frame

    def graders(self, data_dir: PathLike, pred_roots: Sequence[PathLike], out: PathLike,
                names: Optional[Sequence[str]] = None, include_truth: bool = True) -> Dict[str, Any]:
        """
        Pairwise CDR-error and dice tables with each prediction directory as a
        grader, optionally alongside the ground-truth labels.
        """
        dataset = load_dataset(data_dir)
        normalizers = self.normalizers(dataset)
        ids = [s.sample_id for s in dataset]
        names = list(names) if names else [Path(r).name or str(r) for r in pred_roots]
        if len(names) != len(pred_roots):
            raise InvalidParameterError("one grader name per prediction directory is required")

        cdrs: List[List[float]] = []
        masks: Dict[int, List[List[np.ndarray]]] = {OC: [], OD: []}
        if include_truth:
            names = ["truth"] + names
            cdrs.append([s.cdr for s in dataset])
            for c in (OC, OD):
                masks[c].append([s.masks[c - 1] for s in dataset])

        fallback = self.cfg.eval.fallback == "decodable"
        for root in pred_roots:
            preds = load_predictions(root, ids)
            values = []
            for sid in ids:
                p = preds[sid]
                try:
                    values.append(predict_cdr(p.prob, p.field, normalizers, fallback=fallback).cdr)
                except CDRError:
                    values.append(float("nan"))
            cdrs.append(values)
            for c in (OC, OD):
                masks[c].append([preds[sid].prob[c - 1] > self.cfg.eval.mask_threshold for sid in ids])

        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        cdr_table = pairwise_table(cdrs, lambda a, b: abs(a - b), names)
        cdr_table.table.to_csv(out / "graders_cdr_error.csv", float_format="%.10g")
        cdr_table.upper_triangle().to_csv(out / "graders_cdr_error_upper.csv", float_format="%.10g")
        summary = {"cdr_error": cdr_table.averages.to_dict()}
        for c in (OC, OD):
            table = pairwise_table(masks[c], dice, names)
            table.table.to_csv(out / f"graders_dice_{CLASS_NAMES[c]}.csv", float_format="%.10g")
            summary[f"dice_{CLASS_NAMES[c]}"] = table.averages.to_dict()
        write_json(out / "graders_summary.json", summary)
        write_resolved_config(self.cfg, out)
        return summary

    def bags(self, data_dir: PathLike, sample: Union[int, str], out: PathLike) -> Dict[str, Any]:
        """JSON dump of the positive bags and negative counts of one sample"""
        dataset = load_dataset(data_dir)
        if isinstance(sample, int) or str(sample).isdigit():
            index = int(sample)
            if not 0 <= index < len(dataset):
                raise InvalidParameterError(
                    f"sample index {index} out of range",
                    suggestion=f"Use an index in [0, {len(dataset) - 1}] or a sample id",
                )
            s = dataset[index]
        else:
            by_id = dataset.by_id()
            if sample not in by_id:
                raise InvalidParameterError(f"unknown sample id {sample}")
            s = by_id[sample]
        dump: Dict[str, Any] = {"sample_id": s.sample_id, "dims": list(s.dims), "classes": {}}
        for c in range(1, self.cfg.num_classes + 1):
            bag_set = BagSet.from_label(s.label, c, self.cfg.seg.bags, s.dims)
            dump["classes"][CLASS_NAMES.get(c, str(c))] = {
                "n_positive": len(bag_set),
                "n_negative": int(negative_mask(s.label, c, s.dims).sum()),
                "bags": bags_to_records(list(bag_set.bags())),
            }
        write_json(Path(out) / "bags.json", dump)
        write_resolved_config(self.cfg, out)
        return dump
