"""
Command-line entry point: fit, predict, simulate, sigma-hist, concentrate, evaluate
"""

import argparse
import logging
import os
import sys
import time
from typing import Any, Dict, List, Optional, Sequence

import joblib
import numpy as np
import pandas as pd
import scipy

from src import __version__
from src.config import get_config
from src.core.errors import FartError
from src.core.honest_trees import SSE_METHODS, ForestParams, train_forest
from src.core.random_streams import make_stream, PHASE_FOREST, PHASE_ENSEMBLE, PHASE_INTERVAL
from src.data.csv_loader import ColumnSpec, read_csv, read_features
from src.data.model_store import ModelArchive, save_model, load_model
from src.data.report_writer import ReportDocument, write_report
from src.engines.fiducial import (
    generate_ensemble, point_estimates, confidence_intervals, prediction_intervals, sigma_interval
)
from src.experiments.concentration import theorem1_concentration
from src.experiments.real_data import run_real_data_coverage
from src.experiments.simulation import ALL_TARGETS, TARGET_MEAN, SimConfig, run_coverage_experiment, sigma_histogram

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2

DEFAULT_CONCENTRATION_SIZES = "100,500,1000,5000"


def setup_logging(log_dir: str, verbose: bool = False) -> None:
    """Log to <log_dir>/fart.log and the console"""
    os.makedirs(log_dir, exist_ok=True)
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(os.path.join(log_dir, 'fart.log')),
            logging.StreamHandler()
        ],
        force=True,
    )


def library_versions() -> Dict[str, str]:
    return {
        "fart": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "joblib": joblib.__version__,
    }


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


def _str_list(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (default 0, env FART_SEED)")
    common.add_argument("--trees", type=int, help="number of trees")
    common.add_argument("--draws", type=int, help="number of fiducial draws M")
    common.add_argument("--min-node-size", type=int, help="minimum rows per child node")
    common.add_argument("--mtry", type=int, help="features considered per split (default ceil(sqrt(p)))")
    common.add_argument("--max-leaves", type=int, help="leaf cap per tree (default floor(n/10)+1)")
    common.add_argument("--sse", choices=list(SSE_METHODS),
                        help="tree SSE: refit leaf means on all rows, or the honest leaf values (default refit)")
    common.add_argument("--level", type=float, help="interval level (default 0.95)")
    common.add_argument("--out", help="report path (default: stdout summary only)")
    common.add_argument("--format", choices=["json", "csv"], default="json", help="report format")
    common.add_argument("--workers", type=int, help="joblib workers; <1 uses every core")
    common.add_argument("--log-dir", help="log directory (default logs)")
    common.add_argument("--timings", action="store_true", help="include runtime in reports")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="fart", description="Honest random forests with fiducial intervals")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--data", required=True, help="input CSV with a header row")
        p.add_argument("--target", required=True, help="response column name")
        p.add_argument("--features", type=_str_list, help="comma-separated feature columns (default: all others)")
        p.add_argument("--missing", dest="missing_sentinel", help="extra cell value treated as missing")

    def sim_args(p: argparse.ArgumentParser, function: str, n: int, p_dim: int) -> None:
        p.add_argument("--function", default=function, choices=["cosine", "xor", "and"])
        p.add_argument("--n", type=int, default=n, help="training sample size")
        p.add_argument("--p", type=int, default=p_dim, help="feature dimension")
        p.add_argument("--sigma", type=float, default=1.0, help="noise scale")

    fit = sub.add_parser("fit", parents=[common], help="train a forest and ensemble from CSV")
    data_args(fit)
    fit.add_argument("--model", required=True, help="archive path to write")

    predict = sub.add_parser("predict", parents=[common], help="intervals for every row of a CSV")
    predict.add_argument("--model", required=True, help="archive written by fit")
    predict.add_argument("--data", required=True, help="CSV with the model's feature columns")
    predict.add_argument("--missing", dest="missing_sentinel", help="extra cell value treated as missing")

    simulate = sub.add_parser("simulate", parents=[common], help="coverage experiment")
    sim_args(simulate, "cosine", 200, 2)
    simulate.add_argument("--reps", type=int, help="repetitions (default 200)")
    simulate.add_argument("--extra-levels", type=_float_list, default=[], help="more levels, comma-separated")
    simulate.add_argument("--targets", type=_str_list, default=[TARGET_MEAN],
                          help=f"comma-separated subset of {','.join(ALL_TARGETS)}")

    hist = sub.add_parser("sigma-hist", parents=[common], help="histogram of sigma~ for one ensemble")
    sim_args(hist, "xor", 200, 50)
    hist.add_argument("--bins", type=int, help="histogram bins (default 30)")

    conc = sub.add_parser("concentrate", parents=[common], help="fiducial mass on minimal true trees")
    conc.add_argument("--sizes", type=_int_list, default=_int_list(DEFAULT_CONCENTRATION_SIZES))
    conc.add_argument("--sigma", type=float, default=1.0)
    conc.add_argument("--p", type=int, default=6)

    evaluate = sub.add_parser("evaluate", parents=[common], help="prediction-interval coverage on real data")
    data_args(evaluate)
    evaluate.add_argument("--test-fraction", type=float, help="test share per split (default 0.2)")
    evaluate.add_argument("--test-size", type=int, help="test rows per split; overrides --test-fraction")
    evaluate.add_argument("--splits", type=int, help="random splits (default 20)")

    return parser


def _resolve_config(args: argparse.Namespace) -> Dict[str, Any]:
    return get_config({
        "seed": args.seed,
        "n_trees": args.trees,
        "draws": args.draws,
        "min_node_size": args.min_node_size,
        "mtry": args.mtry,
        "max_leaves": args.max_leaves,
        "sse": args.sse,
        "level": args.level,
        "workers": args.workers,
        "log_dir": args.log_dir,
        "reps": getattr(args, "reps", None),
        "hist_bins": getattr(args, "bins", None),
        "test_fraction": getattr(args, "test_fraction", None),
        "test_size": getattr(args, "test_size", None),
        "splits": getattr(args, "splits", None),
    })


def _experiment_size(args: argparse.Namespace, config: Dict[str, Any]) -> Dict[str, int]:
    # Experiments default to the desk-scale tree and draw counts
    return {
        "n_trees": args.trees if args.trees is not None else config["experiment_trees"],
        "draws": args.draws if args.draws is not None else config["experiment_draws"],
    }


def _sim_config(args: argparse.Namespace, config: Dict[str, Any], reps: int) -> SimConfig:
    return SimConfig(
        function_name=args.function, n=args.n, p=args.p, sigma=args.sigma, reps=reps,
        level=config["level"], extra_levels=tuple(getattr(args, "extra_levels", ()) or ()),
        targets=tuple(getattr(args, "targets", (TARGET_MEAN,))),
        min_node_size=config["min_node_size"], mtry=config["mtry"], max_leaves=config["max_leaves"],
        sse=config["sse"],
        master_seed=config["seed"], **_experiment_size(args, config),
    )


def _column_spec(args: argparse.Namespace) -> ColumnSpec:
    features = tuple(args.features) if args.features else None
    return ColumnSpec(target_column=args.target, feature_columns=features, missing_sentinel=args.missing_sentinel)


def cmd_fit(args, config) -> ReportDocument:
    imported = read_csv(args.data, _column_spec(args))
    data = imported.dataset
    params = ForestParams.from_config(config)
    seed = config["seed"]
    forest = train_forest(data, params, make_stream(seed, [PHASE_FOREST]), n_jobs=config["workers"])
    ensemble = generate_ensemble(forest, data, config["draws"], make_stream(seed, [PHASE_ENSEMBLE]),
                                 n_jobs=config["workers"])
    save_model(ModelArchive(forest=ensemble.forest, master_seed=seed, ensemble=ensemble), args.model)

    sig = sigma_interval(ensemble, config["level"])
    record = {
        "n": data.n, "p": data.p, "dropped_rows": imported.dropped_rows,
        "trees": forest.n_trees, "eligible_trees": int(ensemble.weights.tree_indices.size),
        "draws": ensemble.M, "sigma_mean": float(ensemble.sigma_samples.mean()),
        "sigma_lower": sig.lower, "sigma_upper": sig.upper, "level": config["level"],
    }
    echo = {"data": args.data, "target": args.target, "features": data.feature_names,
            "params": forest.params.to_dict(), "draws": config["draws"], "seed": seed}
    return ReportDocument(kind="fit", config=echo, records=[record])


def cmd_predict(args, config) -> ReportDocument:
    archive = load_model(args.model)
    forest = archive.forest
    ensemble = archive.ensemble
    if ensemble is None:
        ensemble = generate_ensemble(forest, forest.dataset, config["draws"],
                                     make_stream(archive.master_seed, [PHASE_ENSEMBLE]), n_jobs=config["workers"])
    columns = forest.dataset.feature_names or [f"x{j + 1}" for j in range(forest.dataset.p)]
    X, row_ids, dropped = read_features(args.data, columns, args.missing_sentinel)

    level = config["level"]
    estimates = point_estimates(ensemble, X)
    cis = confidence_intervals(ensemble, X, level)
    pis = prediction_intervals(ensemble, X, level, make_stream(archive.master_seed, [PHASE_INTERVAL]))
    records = [
        {"row_id": int(rid), "estimate": float(est), "ci_lower": ci.lower, "ci_upper": ci.upper,
         "pi_lower": pi.lower, "pi_upper": pi.upper, "level": level}
        for rid, est, ci, pi in zip(row_ids, estimates, cis, pis)
    ]
    echo = {"model": args.model, "data": args.data, "level": level, "dropped_rows": dropped,
            "seed": archive.master_seed, "params": forest.params.to_dict(), "draws": ensemble.M}
    return ReportDocument(kind="predict", config=echo, records=records)


def cmd_simulate(args, config) -> ReportDocument:
    sim = _sim_config(args, config, config["reps"])
    report = run_coverage_experiment(
        sim, n_jobs=config["workers"],
        progress_callback=lambda prog: logger.debug(prog.get_status_message()),
        timings=args.timings,
    )
    return ReportDocument.from_records("coverage", sim.to_dict(), report.records)


def cmd_sigma_hist(args, config) -> ReportDocument:
    sim = _sim_config(args, config, 1)
    hist = sigma_histogram(sim, bins=config["hist_bins"], n_jobs=config["workers"])
    records = [
        {"bin": i, "lower": lo, "upper": hi, "count": c}
        for i, (lo, hi, c) in enumerate(zip(hist.edges[:-1], hist.edges[1:], hist.counts))
    ]
    echo = sim.to_dict()
    echo.update({"bins": config["hist_bins"], "sigma_mean": hist.mean, "sigma_std": hist.std, "M": hist.M})
    return ReportDocument(kind="sigma-hist", config=echo, records=records)


def cmd_concentrate(args, config) -> ReportDocument:
    trace = theorem1_concentration(args.sizes, config["seed"], sigma=args.sigma, p=args.p)
    records = [
        {"n": n, "mass": mass, "heaviest": best}
        for n, mass, best in zip(trace.sample_sizes, trace.masses, trace.heaviest)
    ]
    echo = {"sizes": trace.sample_sizes, "seed": trace.seed, "sigma": args.sigma, "p": args.p,
            "l0": trace.l0, "family": trace.family}
    return ReportDocument(kind="concentration", config=echo, records=records)


def cmd_evaluate(args, config) -> ReportDocument:
    imported = read_csv(args.data, _column_spec(args))
    params = ForestParams.from_config(config)
    report = run_real_data_coverage(
        imported.dataset, test_fraction=config["test_fraction"], splits=config["splits"], params=params,
        draws=config["draws"], level=config["level"], master_seed=config["seed"], n_jobs=config["workers"],
        test_size=config["test_size"],
    )
    echo = {"data": args.data, "target": args.target, "features": imported.dataset.feature_names,
            "dropped_rows": imported.dropped_rows, "test_fraction": config["test_fraction"],
            "test_size": config["test_size"],
            "splits": config["splits"], "params": params.to_dict(), "draws": config["draws"],
            "level": config["level"], "seed": config["seed"], "mean_coverage": report.mean_coverage,
            "coverage_std": report.coverage_std, "mean_width": report.mean_width}
    return ReportDocument.from_records("real-data", echo, report.records)


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "sigma-hist": cmd_sigma_hist,
    "concentrate": cmd_concentrate,
    "evaluate": cmd_evaluate,
}


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one CLI command

    Returns:
        0 on success, 2 on usage errors, 3 on data errors, 4 on numeric errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 0 for --help and 2 for usage errors
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        config = _resolve_config(args)
    except (ValueError, TypeError) as e:
        parser.print_usage(sys.stderr)
        print(f"fart: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    setup_logging(config["log_dir"], args.verbose)
    logger.info(f"fart {args.command}: seed={config['seed']}, versions={library_versions()}")
    logger.info(f"Resolved configuration: {config}")

    start = time.time()
    try:
        report = COMMANDS[args.command](args, config)
        report.versions = library_versions()
        report.runtime_ms = (time.time() - start) * 1000.0 if args.timings else None
        if args.out:
            write_report(report, args.out, args.format)
        else:
            logger.info(f"{report.kind}: {len(report.records)} records (use --out to save)")
    except FartError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    return EXIT_OK


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
