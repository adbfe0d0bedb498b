"""
Command-line entry point.

    gen-data   write a Waveform or synthetic ICA dataset as CSV
    fit        fit a reduction pipeline and save the model file
    transform  reduce a CSV with a saved model
    eval       fit, train the classifier on the reduced features, report metrics as TSV
    cost       print the hardware resource estimate of a configuration
    reproduce  rerun the accuracy table (table1) or the cost table (table2)

Exit status: 0 on success, 1 on usage or configuration errors, 2 on data or runtime errors.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import yaml
from pydantic import ValidationError

from src.easi_core.costmodel import estimate_resources, estimate_to_tsv, format_estimate
from src.easi_core.data import (
    Dataset,
    SyntheticIcaSpec,
    generate_ica_mixture,
    generate_waveform,
    load_csv,
    save_csv,
    split,
)
from src.easi_core.exceptions import (
    ArgumentError,
    ConfigurationError,
    DataFormatError,
    DiagnosticError,
    DivergenceError,
    ModelFormatError,
    UsageError,
)
from src.easi_core.logger import LOG_DIR, set_up_easi_logger, set_up_trace_logger
from src.easi_core.modes import InitScheme, PipelineMode, Precision, SourceDistribution
from src.easi_core.seeding import stream_rng, stream_seed
from src.reduction_engine import model_io
from src.reduction_engine.config import PipelineConfig
from src.reduction_engine.evaluation import (
    MlpConfig,
    accuracy,
    covariance_diagnostic,
    metrics_row,
    train_mlp,
    write_metrics_tsv,
)
from src.reduction_engine.pipeline import fit
from src.reduction_engine.reproduce import reproduce

logger = logging.getLogger("reduction_engine")

USAGE_ERRORS = (UsageError, ConfigurationError, ArgumentError, ValidationError)
RUNTIME_ERRORS = (DataFormatError, ModelFormatError, DivergenceError, DiagnosticError, OSError)


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser that raises UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(f"{self.format_usage().strip()}\n{self.prog}: error: {message}")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="global seed split into named streams")
    parser.add_argument("--log-dir", type=Path, default=LOG_DIR, help="directory of the log files")


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="PipelineConfig YAML; explicit flags override it")
    parser.add_argument("--mode", choices=[mode.value for mode in PipelineMode])
    parser.add_argument("--m", type=int, help="input dimension (defaults to the data width)")
    parser.add_argument("--p", type=int, help="intermediate dimension of the rp modes")
    parser.add_argument("--n", type=int, help="output dimension")
    parser.add_argument("--mu", type=float, help="EASI learning rate")
    parser.add_argument("--epochs", type=int, help="maximum training epochs")
    parser.add_argument("--tol", type=float, help="convergence tolerance on the epoch update")
    parser.add_argument("--batch", type=int, help="samples averaged per update")
    parser.add_argument("--init", choices=[scheme.value for scheme in InitScheme])
    parser.add_argument("--precision", choices=[precision.value for precision in Precision])
    parser.add_argument("--rp-scale", type=float, help="factor applied to projected samples")
    parser.add_argument("--standardize", action="store_true", default=None)
    parser.add_argument("--keep-second-order", action="store_true", default=None)
    parser.add_argument("--cache-projection", action="store_true", default=None)
    parser.add_argument("--data", type=Path, required=True, help="training CSV")
    parser.add_argument("--labels-col", type=int, help="zero-based label column, negative from the end")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="run_reduction", description="Streaming EASI dimensionality reduction.")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    gen = commands.add_parser("gen-data", help="write a synthetic dataset as CSV")
    _add_common(gen)
    gen.add_argument("--kind", choices=["waveform", "ica"], default="waveform")
    gen.add_argument("--samples", type=int, default=5000)
    gen.add_argument("--drop", type=int, default=0, help="trailing Waveform features to drop")
    gen.add_argument("--m", type=int, default=4, help="mixture dimension (ica)")
    gen.add_argument("--n", type=int, default=4, help="number of sources (ica)")
    gen.add_argument("--distribution", choices=[d.value for d in SourceDistribution], default="uniform")
    gen.add_argument("--mixing-out", type=Path, help="where to write the mixing matrix (ica)")
    gen.add_argument("--out", type=Path, required=True)

    fit_cmd = commands.add_parser("fit", help="fit a pipeline and save the model")
    _add_common(fit_cmd)
    _add_pipeline_flags(fit_cmd)
    fit_cmd.add_argument("--out", type=Path, required=True, help="model file")

    transform = commands.add_parser("transform", help="reduce a CSV with a saved model")
    _add_common(transform)
    transform.add_argument("--model", type=Path, required=True)
    transform.add_argument("--data", type=Path, required=True)
    transform.add_argument("--labels-col", type=int)
    transform.add_argument("--out", type=Path, required=True)

    evaluate = commands.add_parser("eval", help="fit, classify and report metrics")
    _add_common(evaluate)
    _add_pipeline_flags(evaluate)
    evaluate.add_argument("--train-size", type=int, help="training samples (default 80%%)")
    evaluate.add_argument("--mlp-epochs", type=int, default=100)
    evaluate.add_argument("--out", type=Path, help="metrics TSV (default stdout)")

    cost = commands.add_parser("cost", help="print a resource estimate")
    _add_common(cost)
    cost.add_argument("--mode", choices=[mode.value for mode in PipelineMode], required=True)
    cost.add_argument("--m", type=int, required=True)
    cost.add_argument("--p", type=int)
    cost.add_argument("--n", type=int)
    cost.add_argument("--keep-second-order", action="store_true")
    cost.add_argument("--tsv", type=Path, help="also write the estimate as TSV")

    repro = commands.add_parser("reproduce", help="rerun table1 or table2")
    _add_common(repro)
    repro.add_argument("table", choices=["table1", "table2"])
    repro.add_argument("--plan", type=Path, help="reproduction plan YAML")
    repro.add_argument("--out", type=Path, help="report TSV (default stdout)")
    return parser


def _require_files(*paths: Optional[Path]) -> None:
    for path in paths:
        if path is not None and not path.is_file():
            raise UsageError(f"file not found: {path}")


def pipeline_config(args: argparse.Namespace, width: Optional[int] = None) -> PipelineConfig:
    """Merge the YAML config (if any) with explicit flags; flags win."""
    settings = {}
    if args.config is not None:
        with open(args.config, "r") as f:
            settings = yaml.safe_load(f) or {}
    easi = dict(settings.pop("easi", {}))
    overrides = {
        "mode": args.mode,
        "m": args.m,
        "p": args.p,
        "n": args.n,
        "rp_scale": args.rp_scale,
        "standardize_input": args.standardize,
        "keep_second_order": args.keep_second_order,
        "cache_projection": args.cache_projection,
    }
    settings.update({key: value for key, value in overrides.items() if value is not None})
    easi_overrides = {
        "learning_rate": args.mu,
        "max_epochs": args.epochs,
        "convergence_tol": args.tol,
        "batch_size": args.batch,
        "init_scheme": args.init,
        "precision": args.precision,
    }
    easi.update({key: value for key, value in easi_overrides.items() if value is not None})
    easi.setdefault("init_seed", stream_seed(args.seed, "easi-init"))
    settings.setdefault("rp_seed", stream_seed(args.seed, "rp"))
    settings.setdefault("m", width)
    if "mode" not in settings:
        raise UsageError("a mode is required (--mode or a config file)")
    if settings["m"] is None:
        raise UsageError("the input dimension is required (--m or a config file)")
    settings["easi"] = easi
    return PipelineConfig(**settings)


def _load_training_data(args: argparse.Namespace) -> Tuple[PipelineConfig, Dataset]:
    _require_files(args.config, args.data)
    if args.m is not None:
        # dimension errors surface before the data is read
        cfg = pipeline_config(args)
        return cfg, load_csv(args.data, args.labels_col)
    data = load_csv(args.data, args.labels_col)
    return pipeline_config(args, data.feature_count), data


def _run_gen_data(args: argparse.Namespace) -> None:
    if args.kind == "waveform":
        dataset = generate_waveform(args.samples, stream_seed(args.seed, "data"), args.drop)
        save_csv(dataset, args.out)
    else:
        rng = stream_rng(args.seed, "data")
        spec = SyntheticIcaSpec(rng.standard_normal((args.m, args.n)), SourceDistribution(args.distribution))
        dataset, _ = generate_ica_mixture(spec, args.samples, int(rng.integers(2**63)))
        save_csv(dataset, args.out)
        if args.mixing_out is not None:
            np.savetxt(args.mixing_out, spec.mixing_matrix, delimiter=",", fmt="%.17g")
    logger.info("Wrote %d %s samples to %s", dataset.sample_count, args.kind, args.out)


def _run_fit(args: argparse.Namespace) -> None:
    cfg, data = _load_training_data(args)
    fp = fit(cfg, data)
    model_io.save(fp, args.out)
    print(f"{fp!r} written to {args.out}")


def _run_transform(args: argparse.Namespace) -> None:
    _require_files(args.model, args.data)
    fp = model_io.load(args.model)
    data = load_csv(args.data, args.labels_col)
    if data.feature_count != fp.config.m:
        raise DataFormatError(f"model expects {fp.config.m} features, {args.data} has {data.feature_count}")
    save_csv(data.with_samples(fp.transform_batch(data.samples)), args.out)


def _run_eval(args: argparse.Namespace) -> None:
    if args.labels_col is None:
        raise UsageError("eval needs --labels-col")
    cfg, data = _load_training_data(args)
    n_train = args.train_size if args.train_size is not None else int(0.8 * data.sample_count)
    train, test = split(data, n_train)
    fp = fit(cfg, train)
    reduced_train = Dataset(fp.transform_batch(train.samples), train.labels, data.num_classes)
    reduced_test = Dataset(fp.transform_batch(test.samples), test.labels, data.num_classes)
    mlp_cfg = MlpConfig(epochs=args.mlp_epochs, seed=stream_seed(args.seed, "mlp"))
    model = train_mlp(reduced_train, mlp_cfg)
    _, whiteness_error = covariance_diagnostic(reduced_test.samples)
    row = metrics_row(
        cfg.mode.value,
        cfg.m,
        cfg.p,
        cfg.n,
        args.seed,
        accuracy_value=accuracy(model, reduced_test),
        whiteness_error=whiteness_error,
    )
    write_metrics_tsv([row], args.out if args.out is not None else sys.stdout)


def _run_cost(args: argparse.Namespace) -> None:
    mode = PipelineMode(args.mode)
    terms = None
    if args.keep_second_order:
        if mode is not PipelineMode.RP_THEN_ICA:
            raise UsageError("--keep-second-order only applies to rp+ica")
        terms = (True, True)
    estimate = estimate_resources(mode, args.m, args.p, args.n, terms=terms)
    print(format_estimate(estimate))
    if args.tsv is not None:
        args.tsv.write_text(estimate_to_tsv(estimate), encoding="utf-8")


def _run_reproduce(args: argparse.Namespace) -> None:
    _require_files(args.plan)
    reproduce(args.table, args.seed, args.plan, args.out if args.out is not None else sys.stdout)


COMMANDS = {
    "gen-data": _run_gen_data,
    "fit": _run_fit,
    "transform": _run_transform,
    "eval": _run_eval,
    "cost": _run_cost,
    "reproduce": _run_reproduce,
}


def dispatch(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    set_up_easi_logger(args.log_dir)
    set_up_easi_logger(args.log_dir, "reduction_engine")
    set_up_trace_logger(args.log_dir)
    logger.info("Running %s", args.command)
    try:
        COMMANDS[args.command](args)
    except USAGE_ERRORS as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"error: {e}", file=sys.stderr)
        return 1
    except RUNTIME_ERRORS as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(dispatch())
