"""
Command-line entry point

    cdr-system gen --n 20 --out output/data
    cdr-system optimize --data output/data --out output/run
    cdr-system eval --data output/data --predictions output/run --out output/eval
    cdr-system demo --out output/demo

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or usage.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from .config import get_settings, load_run_config, write_resolved_config
from .constants import VERSION
from .diagnostics.gradcheck import SUITES, run_gradcheck
from .errors import CDRError, ConfigurationError, GradientCheckError, InvalidParameterError
from .log_utils import setup_logging
from .pipeline import ExperimentRunner
from .regression.eiou import eiou_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# --seed sets every seeded component
SEED_KEYS = ("synth.seed", "optimizer.seed", "gradcheck.seed", "eiou.seed")


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON run configuration (flags override it)")
    common.add_argument("--seed", type=int, help="Seed for every random component")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--workers", type=int, help="Parallel workers across samples")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="Logging level (default from CDR_LOG_LEVEL)")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="cdr-system",
        description="Tight-box weakly supervised OC/OD segmentation and CDR estimation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Defaults are read from config/config.yaml when --config is not given.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="Generate a synthetic dataset")
    p.add_argument("--n", type=int, help="Number of samples")

    p = sub.add_parser("optimize", parents=[common], help="Direct optimization per image")
    p.add_argument("--data", required=True, help="Dataset directory")
    p.add_argument("--n", type=int, help="Only the first N samples")

    p = sub.add_parser("eval", parents=[common], help="CDR, dice, F1 and MAD of predictions")
    p.add_argument("--data", required=True, help="Dataset directory")
    p.add_argument("--predictions", required=True, help="Directory written by optimize")
    p.add_argument("--n", type=int, help="Only the first N samples")

    p = sub.add_parser("eiou", parents=[common], help="Closed-form eIoU vs brute-force oracle")
    p.add_argument("--n", type=int, help="Number of random (r1, r2) points")
    p.add_argument("--tol", type=float, help="Allowed |closed form - oracle|")

    p = sub.add_parser("gradcheck", parents=[common], help="Finite-difference gradient suites")
    p.add_argument("--tol", type=float, help="Relative error tolerance")
    p.add_argument("--n", type=int, help="Instances per suite")
    p.add_argument("--suites", nargs="+", choices=list(SUITES), help="Subset of suites")

    p = sub.add_parser("demo", parents=[common], help="gen -> optimize -> eval end to end")
    p.add_argument("--n", type=int, help="Number of samples")

    p = sub.add_parser("calibrate", parents=[common], help="Repeated demo runs and derived thresholds")
    p.add_argument("--n", type=int, help="Number of samples per run")
    p.add_argument("--runs", type=int, default=3, help="Number of runs on consecutive seeds")

    p = sub.add_parser("sweep", parents=[common], help="Sensitivity runs over sigma and T")
    p.add_argument("--n", type=int, help="Number of samples")

    p = sub.add_parser("graders", parents=[common], help="Pairwise tables across prediction dirs")
    p.add_argument("--data", required=True, help="Dataset directory")
    p.add_argument("--predictions", nargs="+", required=True, help="Prediction directories")
    p.add_argument("--names", nargs="+", help="Grader names, one per prediction directory")
    p.add_argument("--no-truth", action="store_true", help="Leave the ground truth out")

    p = sub.add_parser("bags", parents=[common], help="Dump the MIL bags of one sample")
    p.add_argument("--data", required=True, help="Dataset directory")
    p.add_argument("--sample", default="0", help="Sample index or id")

    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if args.seed is not None:
        overrides.update({key: args.seed for key in SEED_KEYS})
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.out is not None:
        overrides["out_dir"] = args.out
    n = getattr(args, "n", None)
    if n is not None:
        if args.command in ("gen", "demo", "calibrate"):
            overrides["n_samples"] = n
        elif args.command == "sweep":
            overrides["sweep.n_samples"] = n
        elif args.command == "eiou":
            overrides["eiou.n_points"] = n
        elif args.command == "gradcheck":
            overrides["gradcheck.instances"] = n
    tol = getattr(args, "tol", None)
    if tol is not None:
        overrides["eiou.tolerance" if args.command == "eiou" else "gradcheck.tolerance"] = tol
    return overrides


def _config_path(args: argparse.Namespace) -> Optional[str]:
    if args.config:
        return args.config
    default = Path(get_settings().CONFIG_PATH)
    return str(default) if default.exists() else None


def _print(data: Any) -> None:
    print(json.dumps(data, indent=2, sort_keys=True))


def cmd_gen(runner: ExperimentRunner, args, out: Path) -> int:
    dataset = runner.run_generate(out)
    _print({"n_samples": len(dataset), "out": str(out)})
    return EXIT_OK


def cmd_optimize(runner: ExperimentRunner, args, out: Path) -> int:
    predictions = runner.run_optimize(args.data, out, args.n)
    _print({"n_samples": len(predictions), "out": str(out)})
    return EXIT_OK


def cmd_eval(runner: ExperimentRunner, args, out: Path) -> int:
    report = runner.run_evaluate(args.data, args.predictions, out, args.n)
    _print(report.to_dict())
    return EXIT_OK


def cmd_eiou(runner: ExperimentRunner, args, out: Path) -> int:
    cfg = runner.cfg.eiou
    df = eiou_table(cfg)
    out.mkdir(parents=True, exist_ok=True)
    df.to_csv(out / "eiou.csv", index=False, float_format="%.10g")
    write_resolved_config(runner.cfg, out)
    worst = float(df["abs_diff"].max())
    _print({"n_points": len(df), "max_abs_diff": worst, "tolerance": cfg.tolerance})
    if worst > cfg.tolerance:
        logger.error("eIoU closed form deviates from the oracle by %.3e > %.3e", worst, cfg.tolerance)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_gradcheck(runner: ExperimentRunner, args, out: Path) -> int:
    report = run_gradcheck(runner.cfg.gradcheck, args.suites)
    out.mkdir(parents=True, exist_ok=True)
    report.instances.to_csv(out / "gradcheck.csv", index=False, float_format="%.10g")
    report.summary.to_csv(out / "gradcheck_summary.csv", index=False, float_format="%.10g")
    write_resolved_config(runner.cfg, out)
    _print(report.summary.to_dict(orient="records"))
    if not report.passed:
        raise GradientCheckError(report.failed)
    return EXIT_OK


def cmd_demo(runner: ExperimentRunner, args, out: Path) -> int:
    _print(runner.demo(out))
    return EXIT_OK


def cmd_calibrate(runner: ExperimentRunner, args, out: Path) -> int:
    _print(runner.calibrate(out, args.runs))
    return EXIT_OK


def cmd_sweep(runner: ExperimentRunner, args, out: Path) -> int:
    frame = runner.sweep(out)
    _print(frame.to_dict(orient="records"))
    return EXIT_OK


def cmd_graders(runner: ExperimentRunner, args, out: Path) -> int:
    _print(runner.graders(args.data, args.predictions, out, args.names, not args.no_truth))
    return EXIT_OK


def cmd_bags(runner: ExperimentRunner, args, out: Path) -> int:
    try:
        dump = runner.bags(args.data, args.sample, out)
    except InvalidParameterError as e:
        return _fail(e, EXIT_USAGE)
    _print({name: {k: v for k, v in c.items() if k != "bags"} for name, c in dump["classes"].items()})
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "optimize": cmd_optimize,
    "eval": cmd_eval,
    "eiou": cmd_eiou,
    "gradcheck": cmd_gradcheck,
    "demo": cmd_demo,
    "calibrate": cmd_calibrate,
    "sweep": cmd_sweep,
    "graders": cmd_graders,
    "bags": cmd_bags,
}


def _fail(error: CDRError, code: int) -> int:
    print(json.dumps({"error": error.to_dict()}, indent=2), file=sys.stderr)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(args.log_level or settings.LOG_LEVEL)

    try:
        cfg = load_run_config(_config_path(args), _overrides(args))
    except ConfigurationError as e:
        return _fail(e, EXIT_USAGE)

    out = Path(args.out or cfg.out_dir or settings.OUTPUT_DIR)
    runner = ExperimentRunner(cfg)
    try:
        return COMMANDS[args.command](runner, args, out)
    except ConfigurationError as e:
        return _fail(e, EXIT_USAGE)
    except CDRError as e:
        logger.error("%s failed: %s", args.command, e.message)
        return _fail(e, EXIT_FAILURE)


if __name__ == "__main__":
    sys.exit(main())
