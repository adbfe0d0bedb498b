"""
Text model file for fitted pipelines.

Grammar (schema 1), one ``key=value`` per line, keys in this order:

    schema=1
    mode=<rp|pca|ica|rp+ica>
    m=<int>
    p=<int, empty outside the rp modes>
    n=<int>
    rp_seed=<int>
    rp_shape=<rows> <cols>          (empty outside the rp modes)
    rp_scale=<float>
    standardize=<true|false>
    mean=<m floats>                 (only when standardize=true)
    std=<m floats>                  (only when standardize=true)
    easi=<EasiConfig as JSON>
    keep_second_order=<true|false>
    cache_projection=<true|false>
    trace_converged=<true|false>    (trained modes only)
    trace_magnitudes=<floats>       (trained modes only)
    B=                              (trained modes only)
    <n lines of d floats, row-major>

Floats are written with ``repr`` so they read back bit-exact. R is never stored;
it is regenerated from ``rp_seed`` and checked against ``rp_shape``.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from src.easi_core.easi import EasiConfig, SeparationMatrix, TrainTrace
from src.easi_core.exceptions import ArgumentError, ConfigurationError, ModelFormatError
from src.easi_core.projection import sample_projection
from src.reduction_engine.config import PipelineConfig
from src.reduction_engine.pipeline import FittedPipeline

logger = logging.getLogger("reduction_engine")

SCHEMA_VERSION = 1
HEADER_KEYS = (
    "schema",
    "mode",
    "m",
    "p",
    "n",
    "rp_seed",
    "rp_shape",
    "rp_scale",
    "standardize",
    "mean",
    "std",
    "easi",
    "keep_second_order",
    "cache_projection",
    "trace_converged",
    "trace_magnitudes",
)


def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _flag(value: bool) -> str:
    return "true" if value else "false"


def dumps(fp: FittedPipeline) -> str:
    """Render a fitted pipeline in the model file format."""
    cfg = fp.config
    lines = [
        f"schema={SCHEMA_VERSION}",
        f"mode={cfg.mode.value}",
        f"m={cfg.m}",
        f"p={cfg.p if cfg.p is not None else ''}",
        f"n={cfg.n}",
        f"rp_seed={cfg.rp_seed}",
        "rp_shape=" + (f"{fp.projection.rows} {fp.projection.cols}" if fp.projection is not None else ""),
        f"rp_scale={cfg.rp_scale!r}",
        f"standardize={_flag(cfg.standardize_input)}",
    ]
    if cfg.standardize_input:
        lines.append(f"mean={_floats(fp.mean)}")
        lines.append(f"std={_floats(fp.std)}")
    lines += [
        f"easi={cfg.easi.model_dump_json()}",
        f"keep_second_order={_flag(cfg.keep_second_order)}",
        f"cache_projection={_flag(cfg.cache_projection)}",
    ]
    if fp.separation is not None:
        if fp.trace is not None:
            lines.append(f"trace_converged={_flag(fp.trace.converged)}")
            lines.append(f"trace_magnitudes={_floats(fp.trace.magnitudes)}")
        lines.append("B=")
        lines += [_floats(row) for row in fp.separation.values]
    return "\n".join(lines) + "\n"


def save(fp: FittedPipeline, path: Union[str, Path]) -> None:
    """Write ``fp`` to ``path``."""
    Path(path).write_text(dumps(fp), encoding="utf-8")
    logger.info("Saved %r to %s", fp, path)


def _parse_flag(key: str, value: str) -> bool:
    if value not in ("true", "false"):
        raise ModelFormatError(f"{key} must be true or false, got {value!r}")
    return value == "true"


def _parse_int(key: str, value: str) -> Optional[int]:
    if value == "":
        return None
    try:
        return int(value)
    except ValueError:
        raise ModelFormatError(f"{key} must be an integer, got {value!r}") from None


def _parse_vector(key: str, value: str) -> np.ndarray:
    try:
        vector = np.array([float(cell) for cell in value.split()], dtype=np.float64)
    except ValueError:
        raise ModelFormatError(f"{key} holds a non-numeric entry") from None
    if not np.all(np.isfinite(vector)):
        raise ModelFormatError(f"{key} holds a non-finite entry")
    return vector


def _read_header(lines: List[str]) -> Tuple[Dict[str, str], Optional[int]]:
    header: Dict[str, str] = {}
    for index, line in enumerate(lines):
        if line == "B=":
            return header, index + 1
        key, sep, value = line.partition("=")
        if not sep:
            raise ModelFormatError(f"line {index + 1} is not a key=value pair: {line!r}")
        if key not in HEADER_KEYS:
            raise ModelFormatError(f"unknown key {key!r} on line {index + 1}")
        if key in header:
            raise ModelFormatError(f"duplicate key {key!r} on line {index + 1}")
        header[key] = value
    return header, None


def loads(text: str) -> FittedPipeline:
    """Parse the model file format.

    Raises:
        ModelFormatError: On any schema violation or dimension mismatch.
    """
    lines = [line.rstrip("\r") for line in text.splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    header, body_start = _read_header(lines)

    if header.get("schema") != str(SCHEMA_VERSION):
        raise ModelFormatError(f"unsupported schema {header.get('schema')!r}, expected {SCHEMA_VERSION}")
    for key in ("mode", "m", "n", "rp_seed", "standardize", "easi"):
        if key not in header:
            raise ModelFormatError(f"missing required key {key!r}")

    standardize = _parse_flag("standardize", header["standardize"])
    try:
        easi = EasiConfig.model_validate_json(header["easi"])
        cfg = PipelineConfig(
            mode=header["mode"],
            m=_parse_int("m", header["m"]),
            p=_parse_int("p", header.get("p", "")),
            n=_parse_int("n", header["n"]),
            rp_seed=_parse_int("rp_seed", header["rp_seed"]),
            rp_scale=float(header.get("rp_scale", "1.0")),
            easi=easi,
            standardize_input=standardize,
            keep_second_order=_parse_flag("keep_second_order", header.get("keep_second_order", "false")),
            cache_projection=_parse_flag("cache_projection", header.get("cache_projection", "false")),
        )
    except (ValidationError, ConfigurationError, ArgumentError, ValueError) as e:
        if isinstance(e, ModelFormatError):
            raise
        raise ModelFormatError(f"invalid pipeline configuration: {e}") from e

    mean = std = None
    if standardize:
        if "mean" not in header or "std" not in header:
            raise ModelFormatError("standardize=true needs mean and std lines")
        mean = _parse_vector("mean", header["mean"])
        std = _parse_vector("std", header["std"])
        if mean.shape != (cfg.m,) or std.shape != (cfg.m,):
            raise ModelFormatError(f"mean and std must have {cfg.m} entries")
        if np.any(std <= 0):
            raise ModelFormatError("std entries must be positive")

    projection = None
    if cfg.mode.uses_projection:
        shape = header.get("rp_shape", "").split()
        if len(shape) != 2:
            raise ModelFormatError("rp modes need rp_shape=<rows> <cols>")
        rows, cols = (_parse_int("rp_shape", cell) for cell in shape)
        if (rows, cols) != (cfg.p, cfg.m):
            raise ModelFormatError(f"rp_shape {rows}x{cols} does not match p={cfg.p}, m={cfg.m}")
        projection = sample_projection(cfg.p, cfg.m, cfg.rp_seed)

    separation = trace = None
    if cfg.mode.uses_separation:
        if body_start is None:
            raise ModelFormatError(f"mode {cfg.mode.value} needs a B= block")
        body = lines[body_start:]
        d = cfg.easi_input_dim
        if len(body) != cfg.n:
            raise ModelFormatError(f"B has {len(body)} rows, expected {cfg.n}")
        rows_ = []
        for offset, line in enumerate(body):
            row = _parse_vector(f"B row {offset + 1}", line)
            if row.shape != (d,):
                raise ModelFormatError(f"B row {offset + 1} has {row.shape[0]} entries, expected {d}")
            rows_.append(row)
        separation = SeparationMatrix(np.array(rows_).astype(cfg.easi.precision.dtype))
        if "trace_magnitudes" in header:
            magnitudes = _parse_vector("trace_magnitudes", header["trace_magnitudes"]).tolist()
            trace = TrainTrace(
                magnitudes=magnitudes,
                epochs_run=len(magnitudes),
                converged=_parse_flag("trace_converged", header.get("trace_converged", "false")),
            )
    elif body_start is not None:
        raise ModelFormatError(f"mode {cfg.mode.value} has no separation matrix but the file holds B=")

    try:
        return FittedPipeline(cfg, projection, separation, trace, mean, std)
    except ConfigurationError as e:
        raise ModelFormatError(str(e)) from e


def load(path: Union[str, Path]) -> FittedPipeline:
    """Read a fitted pipeline from ``path``.

    Raises:
        FileNotFoundError: If the file does not exist.
        ModelFormatError: If the file violates the schema.
    """
    text = Path(path).read_text(encoding="utf-8")
    fp = loads(text)
    logger.info("Loaded %r from %s", fp, path)
    return fp
