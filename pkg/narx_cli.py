"""
Command-line interface for NARX structure selection experiments.

Subcommands:
    generate   write a benchmark dataset (CSV + JSON sidecar)
    identify   R seeded searches, best-of-R summary, pruning and validity tests
    report     outcome tally, selection frequency and convergence from run files
    sweep      (u_f, RG) grid of 2D-UPSO searches
    validate   correlation tests of an identified model on a dataset
    ofr        OFR-ERR at several thresholds

Exit codes: 0 on success, 1 on any NarxError, 2 on usage errors.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from identification_graph import run_identification
from narx.baselines import ofr_report, ofr_threshold_table
from narx.benchmarks import SYSTEM_IDS, generate_dataset, load_dataset, read_sidecar, truth_mask_for, write_dataset
from narx.config import ALGORITHMS, env_log_level, load_experiment_config
from narx.core import BicEvaluator, IdentifiedModel, RegressorBank, generate_model_set
from narx.errors import ConfigError, NarxError
from narx.nodes import prepare_node
from narx.reports import load_run_reports, write_run_reports
from narx.runner import run_sweep
from narx.utils import configure_logging, read_json, write_json
from narx.validation import (
    aggregate_outcomes,
    average_convergence,
    correlation_tests,
    selection_frequency,
    validation_residuals,
)

logger = logging.getLogger("narx_cli")

CSV_OPTIONS = {"index": False, "float_format": "%.17g", "lineterminator": "\n"}


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, **CSV_OPTIONS)
    logger.info(f"Wrote {path}")
    return path


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


# ============================================================================
# CONFIG FROM FLAGS
# ============================================================================

def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Nested override dict from whichever experiment flags the subcommand defines."""
    get = lambda name: getattr(args, name, None)
    overrides: Dict[str, Any] = {
        "system": get("system"),
        "data_path": get("data"),
        "n": get("n"),
        "n_est": get("n_est"),
        "data_seed": get("data_seed"),
        "algorithm": get("algorithm"),
        "runs": get("runs"),
        "base_seed": get("seed"),
        "workers": get("workers"),
        "output_dir": get("out"),
        "alpha_level": get("alpha"),
        "max_lag": get("max_lag"),
        "model": {"n_u": get("n_u"), "n_y": get("n_y"), "n_l": get("n_l")},
        "swarm": {"ps": get("ps"), "u_f": get("uf"), "RG": get("rg"), "max_fes": get("max_fes")},
        "ga": {"max_fes": get("max_fes")},
        "bpso": {"max_fes": get("max_fes")},
    }
    if get("no_prune"):
        overrides["prune"] = False
    return overrides


def _load_config(args: argparse.Namespace):
    return load_experiment_config(getattr(args, "config", None), _overrides(args), quick=args.quick)


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="Experiment JSON file")
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--system", choices=SYSTEM_IDS, help="Benchmark system to generate")
    source.add_argument("--data", type=Path, help="CSV dataset with header k,u,y")
    parser.add_argument("--n", type=int, help="Record length for generated data")
    parser.add_argument("--n-est", type=int, help="Estimation-set length")
    parser.add_argument("--data-seed", type=int, help="Seed of the generated data")
    parser.add_argument("--n-u", type=int)
    parser.add_argument("--n-y", type=int)
    parser.add_argument("--n-l", type=int)
    parser.add_argument("--out", type=Path, help="Output directory")


def _add_search_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--runs", type=int, help="Independent runs R")
    parser.add_argument("--seed", type=int, help="Base seed (run k uses seed + k)")
    parser.add_argument("--max-fes", type=int, help="Evaluation budget per run")
    parser.add_argument("--ps", type=int, help="Swarm size")
    parser.add_argument("--uf", type=float, help="Unification factor")
    parser.add_argument("--rg", type=int, help="Refresh gap")


# ============================================================================
# SUBCOMMANDS
# ============================================================================

def cmd_generate(args: argparse.Namespace) -> int:
    dataset, sidecar = generate_dataset(args.system, args.n, args.n_est, args.seed)
    stem = args.stem or f"{sidecar['system']}_seed{args.seed}"
    out = args.out or Path(".")
    csv_path, _ = write_dataset(dataset, out, stem, sidecar)
    print(csv_path)
    return 0


def cmd_identify(args: argparse.Namespace) -> int:
    config = _load_config(args)
    final_state = run_identification(config)
    out = Path(config.output_dir)

    if config.system is not None:
        write_dataset(final_state["dataset"], out, "data", final_state.get("sidecar") or None)
    write_json(out / "experiment.json", config.model_dump(mode="json"))
    write_run_reports(final_state["reports"], out / "runs")
    summary_path = write_json(out / "summary.json", final_state["summary"].model_dump(mode="json"))
    if final_state.get("validity") is not None:
        _write_csv(final_state["validity"].to_frame(), out / "validity.csv")
        _write_csv(final_state["validity"].summary(), out / "validity_summary.csv")
    logger.info(f"Identification finished; summary at {summary_path}")
    print(summary_path)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.runs)
    out = args.out or run_dir
    reports = load_run_reports(run_dir)
    model_set = reports[0].model_set()

    pre_masks = [np.asarray(r.best_mask, dtype=np.int8) for r in reports]
    frequency = selection_frequency(pre_masks, len(pre_masks))
    _write_csv(frequency.to_frame(model_set), out / "frequency.csv")
    _write_csv(average_convergence(reports), out / "convergence.csv")

    data_path = args.data or run_dir / "data.csv"
    truth_path = args.truth or data_path.with_suffix(".json")
    sidecar = read_json(truth_path) if truth_path.exists() else None
    truth = truth_mask_for(sidecar, model_set)
    if truth is None:
        logger.warning(f"No ground truth at {truth_path}; outcomes.csv skipped")
        return 0
    if not data_path.exists():
        raise ConfigError(f"dataset {data_path} is needed to prune the run models")
    n_est = args.n_est or sidecar.get("n_est")
    if n_est is None:
        raise ConfigError("--n-est is required when the sidecar does not record it")
    dataset = load_dataset(data_path, int(n_est))
    tally = aggregate_outcomes(reports, truth, args.alpha, dataset, model_set, prune=not args.no_prune)
    system = args.system_label or sidecar.get("system", data_path.stem)
    _write_csv(tally.to_frame(system, reports[0].algorithm), out / "outcomes.csv")
    logger.info(f"Outcomes over {tally.runs} runs: {tally.counts}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_config(args)
    state = prepare_node({"config": config})
    sweep = config.sweep
    frame = run_sweep(
        state["dataset"],
        state["model_set"],
        config.swarm,
        args.uf_values or sweep.uf_values,
        args.rg_values or sweep.rg_values,
        repeats=args.repeats or sweep.repeats,
        base_seed=config.base_seed,
        workers=config.workers,
        prediction=state["prediction"],
    )
    path = _write_csv(frame, Path(config.output_dir) / "sweep.csv")
    print(path)
    return 0


def _model_from_file(path: Path, evaluator: BicEvaluator) -> IdentifiedModel:
    """Model from a run report or a summary (the pruned model when present)."""
    payload = read_json(path)
    model_set = evaluator.bank.model_set
    terms = payload.get("pruned_terms") or payload.get("best_terms")
    coefficients = payload.get("pruned_coefficients") or payload.get("coefficients")
    if terms is None or coefficients is None:
        raise ConfigError(f"{path} holds no model (expected a run report or summary.json)")
    mask = model_set.mask_from_terms(terms)
    return IdentifiedModel(model_set, mask, np.asarray(coefficients, dtype=float))


def cmd_validate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    state = prepare_node({"config": config})
    dataset, model_set = state["dataset"], state["model_set"]
    evaluator = BicEvaluator(RegressorBank(model_set, dataset), state["prediction"])
    model = _model_from_file(args.model, evaluator)
    residuals = validation_residuals(model, dataset, state["prediction"])
    report = correlation_tests(residuals, dataset.validation[0], max_lag=config.max_lag)
    path = _write_csv(report.to_frame(), Path(config.output_dir) / "validity.csv")
    _write_csv(report.summary(), Path(config.output_dir) / "validity_summary.csv")
    for name, passed in report.passes.items():
        logger.info(f"{name}: {'pass' if passed else 'FAIL'} (strictly inside band: {report.within_band[name]})")
    print(f"{'VALID' if report.valid else 'INVALID'} {path}")
    return 0


def cmd_ofr(args: argparse.Namespace) -> int:
    config = _load_config(args)
    state = prepare_node({"config": config})
    dataset, model_set = state["dataset"], state["model_set"]
    out = Path(config.output_dir)
    truth = state["truth_mask"]
    if truth is None:
        logger.warning("No ground truth; spurious counts treat every selected term as spurious")
        truth = np.zeros(len(model_set), dtype=np.int8)
    table = ofr_threshold_table(dataset, model_set, args.sigmas, truth, max_terms=config.ofr.max_terms)
    _write_csv(table, out / "ofr_thresholds.csv")
    evaluator = BicEvaluator(RegressorBank(model_set, dataset), state["prediction"])
    sequences = {}
    for sigma in args.sigmas:
        report = ofr_report(dataset, model_set, config.ofr.model_copy(update={"sigma": sigma}), evaluator=evaluator)
        sequences[repr(float(sigma))] = [step.model_dump() for step in report.err_sequence]
    path = write_json(out / "ofr_err_sequence.json", sequences)
    print(path)
    return 0


# ============================================================================
# PARSER
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="narx_cli", description="NARX structure selection experiments")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ERROR (default NARX_LOG_LEVEL or INFO)")
    parser.add_argument("--workers", type=int, default=None, help="Parallel runs (default NARX_WORKERS or 1)")
    parser.add_argument("--quick", action="store_true", help="Desk-scale preset: 10 runs per experiment")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="Write a benchmark dataset")
    gen.add_argument("--system", required=True, choices=SYSTEM_IDS)
    gen.add_argument("--n", type=int, default=1000)
    gen.add_argument("--n-est", type=int, default=700)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, default=None)
    gen.add_argument("--stem", default=None, help="File name stem (default <system>_seed<seed>)")
    gen.set_defaults(func=cmd_generate)

    ident = sub.add_parser("identify", help="Seeded searches and best-of-R summary")
    _add_data_flags(ident)
    _add_search_flags(ident)
    ident.add_argument("--algorithm", choices=ALGORITHMS)
    ident.add_argument("--alpha", type=float, help="t-test significance level")
    ident.add_argument("--no-prune", action="store_true")
    ident.add_argument("--max-lag", type=int, help="Correlation-test lags")
    ident.set_defaults(func=cmd_identify)

    rep = sub.add_parser("report", help="Outcome, frequency and convergence tables from run files")
    rep.add_argument("--runs", type=Path, required=True, help="Directory of an identify run")
    rep.add_argument("--data", type=Path, default=None, help="Dataset CSV (default <runs>/data.csv)")
    rep.add_argument("--truth", type=Path, default=None, help="Sidecar JSON with true_terms")
    rep.add_argument("--n-est", type=int, default=None)
    rep.add_argument("--alpha", type=float, default=0.05)
    rep.add_argument("--no-prune", action="store_true")
    rep.add_argument("--system-label", default=None)
    rep.add_argument("--out", type=Path, default=None)
    rep.set_defaults(func=cmd_report)

    sweep = sub.add_parser("sweep", help="(u_f, RG) parameter grid")
    _add_data_flags(sweep)
    _add_search_flags(sweep)
    sweep.add_argument("--uf-values", type=_float_list, default=None)
    sweep.add_argument("--rg-values", type=_int_list, default=None)
    sweep.add_argument("--repeats", type=int, default=None)
    sweep.set_defaults(func=cmd_sweep)

    val = sub.add_parser("validate", help="Correlation validity tests of an identified model")
    _add_data_flags(val)
    val.add_argument("--model", type=Path, required=True, help="Run report or summary.json")
    val.add_argument("--max-lag", type=int)
    val.set_defaults(func=cmd_validate)

    ofr = sub.add_parser("ofr", help="OFR-ERR threshold table")
    _add_data_flags(ofr)
    ofr.add_argument("--sigmas", type=_float_list, default=[0.01, 0.008, 0.0065])
    ofr.set_defaults(func=cmd_ofr)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level or env_log_level())
    try:
        return args.func(args)
    except NarxError as e:
        logger.error(str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
