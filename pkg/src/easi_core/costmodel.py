"""
Analytical hardware-cost model of the reduction datapath.

Counts are word-level, per training sample: every multiplication or addition the
datapath performs for one sample maps to one physical unit in a fully parallel
implementation. The EASI datapath has five stages over an input of dimension d
(m for the EASI-only modes, p after random projection) and n outputs:

    1. y = B x                 d*n multiplications, n*(d-1) additions
    2. g(y) = y*y*y            2n multiplications (higher-order term only)
    3. bracket term H          y y^T: n^2 mult, -I: n add;
                               g y^T - (g y^T)^T: n^2 mult, n^2 add;
                               sum of both terms: n^2 add
    4. H B                     n^2*d multiplications, d*n*(n-1) additions
    5. B - mu (H B)            d*n multiplications, d*n additions

Forming y y^T, g y^T and y g^T as three separate outer products gives the usual upper
bound of 3n^2 multipliers for stage 3. Here the antisymmetric term is one outer product
and its transpose, so stage 3 needs at most 2n^2 multipliers (n^2 per enabled term).
Random projection uses m expected additions/subtractions (p*m entries, nonzero with
probability 1/p) and no multipliers.

Registers hold B, H, y, g(y) plus one latch per scalar at each stage boundary;
random projection adds its output latch and 2 bits per ternary entry. A word is
32 bits, matching single-precision floating point.
"""

import math
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from .exceptions import ArgumentError
from .modes import PipelineMode

WORD_BITS = 32
TERNARY_BITS = 2

STAGE_PROJECTION = "random_projection"
STAGE_OUTPUT = "output"
STAGE_NONLINEARITY = "nonlinearity"
STAGE_BRACKET = "bracket_term"
STAGE_PRODUCT = "gradient_product"
STAGE_UPDATE = "update"

EASI_STAGES = (STAGE_OUTPUT, STAGE_NONLINEARITY, STAGE_BRACKET, STAGE_PRODUCT, STAGE_UPDATE)


class OpCounter:
    """Runtime counter of multiplications and additions, keyed by datapath stage.

    The numeric routines accept ``counter=`` and record the operations they execute,
    derived from the shapes of the arrays they touch.
    """

    def __init__(self):
        self.stages: Dict[str, List[int]] = {}

    def add(self, stage: str, multiplications: int = 0, additions: int = 0) -> None:
        counts = self.stages.setdefault(stage, [0, 0])
        counts[0] += int(multiplications)
        counts[1] += int(additions)

    def matvec(self, stage: str, rows: int, cols: int) -> None:
        """rows x cols matrix times vector."""
        self.add(stage, rows * cols, rows * (cols - 1))

    def matmat(self, stage: str, rows: int, inner: int, cols: int) -> None:
        """(rows x inner) times (inner x cols)."""
        self.add(stage, rows * inner * cols, rows * cols * (inner - 1))

    @property
    def multiplications(self) -> int:
        return sum(counts[0] for counts in self.stages.values())

    @property
    def additions(self) -> int:
        return sum(counts[1] for counts in self.stages.values())

    def stage(self, name: str) -> Tuple[int, int]:
        multiplications, additions = self.stages.get(name, [0, 0])
        return multiplications, additions

    def reset(self) -> None:
        self.stages.clear()

    def __repr__(self):
        return f"OpCounter(multiplications={self.multiplications}, additions={self.additions})"


class StageCost(BaseModel):
    name: str
    multipliers: int = Field(ge=0)
    adders: int = Field(ge=0)
    registers: int = Field(ge=0)


class ResourceEstimate(BaseModel):
    """Per-stage and total resource counts for one pipeline configuration."""

    mode: PipelineMode
    m: int
    p: Optional[int] = None
    n: int
    multipliers: int = Field(ge=0)
    adders: int = Field(ge=0)
    registers: int = Field(ge=0)
    per_stage: List[StageCost]

    @model_validator(mode="after")
    def _totals_match_stages(self):
        if self.multipliers != sum(stage.multipliers for stage in self.per_stage):
            raise ValueError("multiplier total does not match the stages")
        if self.adders != sum(stage.adders for stage in self.per_stage):
            raise ValueError("adder total does not match the stages")
        if self.registers != sum(stage.registers for stage in self.per_stage):
            raise ValueError("register total does not match the stages")
        return self

    @property
    def register_bits(self) -> int:
        return self.registers * WORD_BITS

    def stage(self, name: str) -> StageCost:
        for stage in self.per_stage:
            if stage.name == name:
                return stage
        raise KeyError(name)


def projection_stage(m: int, p: int) -> StageCost:
    storage_words = math.ceil(TERNARY_BITS * p * m / WORD_BITS)
    return StageCost(name=STAGE_PROJECTION, multipliers=0, adders=m, registers=p + storage_words)


def easi_stages(n: int, d: int, second_order: bool, higher_order: bool) -> List[StageCost]:
    """The five EASI stages for input dimension ``d`` and ``n`` outputs."""
    square = n * n
    bracket_mult = square * (int(second_order) + int(higher_order))
    bracket_add = (
        n * int(second_order)
        + square * int(higher_order)
        + square * int(second_order and higher_order)
    )
    return [
        # B is stored with the output stage; y is its latch
        StageCost(name=STAGE_OUTPUT, multipliers=d * n, adders=n * (d - 1), registers=n * d + n),
        StageCost(
            name=STAGE_NONLINEARITY,
            multipliers=2 * n * int(higher_order),
            adders=0,
            registers=n * int(higher_order),
        ),
        StageCost(name=STAGE_BRACKET, multipliers=bracket_mult, adders=bracket_add, registers=square),
        StageCost(name=STAGE_PRODUCT, multipliers=square * d, adders=d * n * (n - 1), registers=n * d),
        StageCost(name=STAGE_UPDATE, multipliers=d * n, adders=d * n, registers=0),
    ]


def check_dimensions(mode: PipelineMode, m: int, p: Optional[int], n: Optional[int]) -> Tuple[Optional[int], int]:
    """Validate (m, p, n) for ``mode``; returns (p, n) with n filled in for RP mode."""
    if m < 1:
        raise ArgumentError("m must be positive")
    if mode is PipelineMode.RP:
        if p is None:
            raise ArgumentError("rp mode needs p")
        if n is not None and n != p:
            raise ArgumentError(f"rp mode outputs p features; n={n} must equal p={p}")
        if not 1 <= p <= m:
            raise ArgumentError(f"rp mode needs m >= p >= 1, got m={m}, p={p}")
        return p, p
    if n is None:
        raise ArgumentError(f"{mode.value} mode needs n")
    if mode is PipelineMode.RP_THEN_ICA:
        if p is None:
            raise ArgumentError("rp+ica mode needs p")
        if not m >= p >= n >= 1:
            raise ArgumentError(f"rp+ica mode needs m >= p >= n >= 1, got m={m}, p={p}, n={n}")
        return p, n
    if p is not None:
        raise ArgumentError(f"{mode.value} mode has no intermediate dimension p")
    if not m >= n >= 1:
        raise ArgumentError(f"{mode.value} mode needs m >= n >= 1, got m={m}, n={n}")
    return None, n


def estimate_resources(
    mode: PipelineMode,
    m: int,
    p: Optional[int] = None,
    n: Optional[int] = None,
    terms: Optional[Tuple[bool, bool]] = None,
) -> ResourceEstimate:
    """Resource counts for ``mode`` at dimensions (m, p, n).

    Args:
        terms: (second_order, higher_order) override of the mode's forced term flags.
    """
    mode = PipelineMode(mode)
    p, n = check_dimensions(mode, m, p, n)
    stages: List[StageCost] = []
    if mode.uses_projection:
        stages.append(projection_stage(m, p))
    if mode.uses_separation:
        second_order, higher_order = terms if terms is not None else mode.forced_terms()
        d = p if mode is PipelineMode.RP_THEN_ICA else m
        stages.extend(easi_stages(n, d, second_order, higher_order))
    return ResourceEstimate(
        mode=mode,
        m=m,
        p=p,
        n=n,
        multipliers=sum(stage.multipliers for stage in stages),
        adders=sum(stage.adders for stage in stages),
        registers=sum(stage.registers for stage in stages),
        per_stage=stages,
    )


def savings_ratio(m: int, p: int) -> float:
    """Predicted resource saving of projecting m inputs to p before EASI: m / p."""
    if not m >= p >= 1:
        raise ArgumentError(f"savings ratio needs m >= p >= 1, got m={m}, p={p}")
    return m / p


def format_estimate(estimate: ResourceEstimate) -> str:
    """Aligned text table of an estimate."""
    header = ("stage", "multipliers", "adders", "registers")
    rows = [(s.name, str(s.multipliers), str(s.adders), str(s.registers)) for s in estimate.per_stage]
    rows.append(("total", str(estimate.multipliers), str(estimate.adders), str(estimate.registers)))
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]
    dims = f"mode={estimate.mode.value} m={estimate.m} p={estimate.p if estimate.p is not None else '-'} n={estimate.n}"
    lines = [dims]
    for row in [header] + rows:
        cells = [row[0].ljust(widths[0])] + [cell.rjust(width) for cell, width in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells))
    lines.append(f"register bits: {estimate.register_bits}")
    return "\n".join(lines)


def estimate_to_tsv(estimate: ResourceEstimate) -> str:
    """TSV with one line per stage plus a total line."""
    lines = ["mode\tm\tp\tn\tstage\tmultipliers\tadders\tregisters"]
    prefix = f"{estimate.mode.value}\t{estimate.m}\t{estimate.p if estimate.p is not None else ''}\t{estimate.n}"
    for stage in estimate.per_stage:
        lines.append(f"{prefix}\t{stage.name}\t{stage.multipliers}\t{stage.adders}\t{stage.registers}")
    lines.append(f"{prefix}\ttotal\t{estimate.multipliers}\t{estimate.adders}\t{estimate.registers}")
    return "\n".join(lines) + "\n"
