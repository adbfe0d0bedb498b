"""
End-to-end reproduction of the accuracy and hardware-cost tables.

table1: generate the Waveform data, drop the trailing features, split, fit each
reduction, train the classifier on the reduced training split and score it on the
held-out split.
table2: cost-model estimates of the EASI-only and the projected configuration with
their multiplier ratio and the predicted m / p saving.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, TextIO, Union

from src.easi_core.costmodel import estimate_resources, savings_ratio
from src.easi_core.data import Dataset, generate_waveform, split
from src.easi_core.easi import EasiConfig
from src.easi_core.modes import PipelineMode
from src.easi_core.seeding import stream_seed
from src.reduction_engine.config import PipelineConfig
from src.reduction_engine.evaluation import accuracy, covariance_diagnostic, train_mlp
from src.reduction_engine.pipeline import fit
from src.reduction_engine.schema import ReproductionPlan, ReproductionRow

logger = logging.getLogger("reduction_engine")

EXPERIMENTS_DIR = Path(__file__).resolve().parents[2] / "experiments"
DEFAULT_PLANS = {
    "table1": EXPERIMENTS_DIR / "table1.yaml",
    "table2": EXPERIMENTS_DIR / "table2.yaml",
}

TABLE1_COLUMNS = (
    "m",
    "algorithm_1",
    "p",
    "algorithm_2",
    "n",
    "reference_accuracy",
    "accuracy",
    "whitenessError",
)
TABLE2_COLUMNS = (
    "mode",
    "m",
    "p",
    "n",
    "multipliers",
    "adders",
    "registers",
    "register_bits",
    "multiplier_ratio",
    "register_ratio",
    "savings_ratio",
)


def load_plan(table: str, plan_path: Optional[Union[str, Path]] = None) -> ReproductionPlan:
    """Read the plan at ``plan_path`` or the default plan of ``table``."""
    if table not in DEFAULT_PLANS:
        raise ValueError(f"unknown table {table!r}, expected one of {sorted(DEFAULT_PLANS)}")
    plan = ReproductionPlan.from_yaml(str(plan_path or DEFAULT_PLANS[table]))
    if plan.table != table:
        raise ValueError(f"plan {plan.name!r} describes {plan.table}, not {table}")
    return plan


def row_config(plan: ReproductionPlan, row: ReproductionRow, seed: int) -> PipelineConfig:
    """Pipeline configuration of one table row; seeds come from the named streams."""
    rp_scale = 1.0
    if row.mode.uses_projection and plan.normalize_projection:
        rp_scale = math.sqrt(row.p / row.m)
    # term flags are left unset so the mode decides them
    settings = plan.easi.model_dump(exclude={"include_second_order", "include_higher_order"})
    settings["init_seed"] = stream_seed(seed, "easi-init")
    return PipelineConfig(
        mode=row.mode,
        m=row.m,
        p=row.p,
        n=row.n,
        rp_seed=stream_seed(seed, "rp"),
        rp_scale=rp_scale,
        easi=EasiConfig(**settings),
        standardize_input=plan.standardize_input,
    )


def run_table1(plan: ReproductionPlan, seed: int) -> List[Dict[str, object]]:
    """Run every row of an accuracy plan and return one result dict per row."""
    data = generate_waveform(plan.n_samples, stream_seed(seed, "data"), plan.drop_last_k)
    train, test = split(data, plan.n_train)
    mlp_cfg = plan.mlp.model_copy(update={"seed": stream_seed(seed, "mlp")})
    results = []
    for row in plan.rows:
        cfg = row_config(plan, row, seed)
        fp = fit(cfg, train)
        reduced_train = Dataset(fp.transform_batch(train.samples), train.labels, train.num_classes)
        reduced_test = Dataset(fp.transform_batch(test.samples), test.labels, test.num_classes)
        model = train_mlp(reduced_train, mlp_cfg)
        score = accuracy(model, reduced_test)
        _, whiteness_error = covariance_diagnostic(reduced_test.samples)
        logger.info("%r: accuracy %.4f, whiteness error %.4f", fp, score, whiteness_error)
        projected = row.mode is PipelineMode.RP_THEN_ICA
        results.append(
            {
                "m": row.m,
                "algorithm_1": "rp" if projected else "easi",
                "p": row.p if projected else None,
                "algorithm_2": "easi" if projected else None,
                "n": row.n,
                "reference_accuracy": row.reference_accuracy,
                "accuracy": 100.0 * score,
                "whitenessError": whiteness_error,
            }
        )
    return results


def run_table2(plan: ReproductionPlan) -> List[Dict[str, object]]:
    """Cost estimates of every row, with ratios against the first row."""
    estimates = [estimate_resources(row.mode, row.m, row.p, row.n) for row in plan.rows]
    baseline = estimates[0]
    results = []
    for estimate in estimates:
        results.append(
            {
                "mode": estimate.mode.value,
                "m": estimate.m,
                "p": estimate.p,
                "n": estimate.n,
                "multipliers": estimate.multipliers,
                "adders": estimate.adders,
                "registers": estimate.registers,
                "register_bits": estimate.register_bits,
                "multiplier_ratio": baseline.multipliers / estimate.multipliers,
                "register_ratio": baseline.registers / estimate.registers,
                "savings_ratio": savings_ratio(estimate.m, estimate.p) if estimate.p is not None else 1.0,
            }
        )
    return results


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def format_tsv(columns, rows: List[Dict[str, object]]) -> str:
    lines = ["\t".join(columns)]
    lines += ["\t".join(_cell(row[column]) for column in columns) for row in rows]
    return "\n".join(lines) + "\n"


def reproduce(
    table: str,
    seed: int = 0,
    plan_path: Optional[Union[str, Path]] = None,
    out: Optional[Union[str, Path, TextIO]] = None,
) -> str:
    """Reproduce ``table`` ("table1" or "table2") and return the report TSV.

    The report is also written to ``out`` when given (a path or an open stream).
    """
    plan = load_plan(table, plan_path)
    logger.info("Reproducing %s with plan %r and seed %d", table, plan.name, seed)
    if table == "table1":
        report = format_tsv(TABLE1_COLUMNS, run_table1(plan, seed))
    else:
        report = format_tsv(TABLE2_COLUMNS, run_table2(plan))
    if isinstance(out, (str, Path)):
        Path(out).write_text(report, encoding="utf-8")
    elif out is not None:
        out.write(report)
    return report
