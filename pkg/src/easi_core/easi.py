"""
EASI adaptive separation.

The separation matrix B (n x d) maps an input x to y = B x and is updated per sample
with the relative gradient

    H = [y y^T - I] + [g(y) y^T - y g(y)^T],      B' = B - mu H B,

with g(y) = y^3. The first bracket is the second-order (whitening) term, the second
the higher-order (rotation) term; either can be bypassed. With only the second-order
term the rule is the adaptive whitening update, with only the higher-order term it
is the rotation update that keeps an orthogonal matrix orthogonal to first order.

Note that B' = (I - mu H) B: the row space of B never changes, so the initial matrix
fixes which d-dimensional directions can reach the outputs when n < d. The principal
init puts it on the leading directions of the training data and starts from white outputs,
which the rotation-only update needs to stay bounded.
"""

import logging
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .costmodel import (
    STAGE_BRACKET,
    STAGE_NONLINEARITY,
    STAGE_OUTPUT,
    STAGE_PRODUCT,
    STAGE_UPDATE,
    OpCounter,
)
from .data import Dataset
from .exceptions import ArgumentError, ConfigurationError, DivergenceError
from .modes import InitScheme, Nonlinearity, Precision
from .seeding import make_rng
from .types import EpochSource, Matrix, Vector

logger = logging.getLogger("easi_core")
trace_logger = logging.getLogger("easi_core_trace")

# eigenvalues below this fraction of the largest count as missing directions
PRINCIPAL_RANK_TOL = 1e-10


class SeparationMatrix:
    """Immutable n x m separation matrix with finite entries and n <= m."""

    def __init__(self, values):
        values = np.array(values, copy=True)
        if not np.issubdtype(values.dtype, np.floating):
            values = values.astype(np.float64)
        if values.ndim != 2 or min(values.shape) < 1:
            raise ArgumentError(f"separation matrix must be a non-empty 2-D matrix, got {values.shape}")
        if values.shape[0] > values.shape[1]:
            raise ArgumentError(f"separation matrix must have n <= m, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ArgumentError("separation matrix entries must be finite")
        values.flags.writeable = False
        self._values = values

    @classmethod
    def _wrap(cls, values: Matrix) -> "SeparationMatrix":
        """Adopt an already-checked array without copying."""
        matrix = cls.__new__(cls)
        values.flags.writeable = False
        matrix._values = values
        return matrix

    @property
    def values(self) -> Matrix:
        return self._values

    @property
    def n(self) -> int:
        return self._values.shape[0]

    @property
    def m(self) -> int:
        return self._values.shape[1]

    @property
    def shape(self):
        return self._values.shape

    def __eq__(self, other):
        if not isinstance(other, SeparationMatrix):
            return False
        return np.array_equal(self._values, other._values)

    def __repr__(self):
        return f"SeparationMatrix(n={self.n}, m={self.m}, dtype={self._values.dtype})"


class EasiConfig(BaseModel):
    """Settings of the EASI update and training loop."""

    learning_rate: float = Field(1e-3, gt=0)
    include_second_order: bool = True
    include_higher_order: bool = True
    max_epochs: int = Field(50, ge=1)
    convergence_tol: float = Field(1e-4, gt=0)
    batch_size: int = Field(1, ge=1)
    init_scheme: InitScheme = InitScheme.TRUNCATED_IDENTITY
    init_seed: int = Field(0, ge=0)
    nonlinearity: Nonlinearity = Nonlinearity.CUBIC
    precision: Precision = Precision.DOUBLE

    @model_validator(mode="after")
    def _at_least_one_term(self):
        if not (self.include_second_order or self.include_higher_order):
            raise ValueError("at least one of the second-order and higher-order terms must be on")
        return self


class TrainTrace(BaseModel):
    """Per-epoch relative update magnitudes ||B_end - B_start||_F / ||B_start||_F."""

    magnitudes: List[float] = Field(default_factory=list)
    epochs_run: int = 0
    converged: bool = False

    @model_validator(mode="after")
    def _consistent(self):
        if any(magnitude < 0 for magnitude in self.magnitudes):
            raise ValueError("update magnitudes must be non-negative")
        if self.epochs_run != len(self.magnitudes):
            raise ValueError("epochs_run must equal the number of recorded magnitudes")
        return self


def _output(values: Matrix, x: Vector, counter: Optional[OpCounter]) -> Vector:
    if counter is not None:
        counter.matvec(STAGE_OUTPUT, values.shape[0], values.shape[1])
    return values @ x


def _cubic(y: Vector, counter: Optional[OpCounter]) -> Vector:
    if counter is not None:
        counter.add(STAGE_NONLINEARITY, 2 * y.shape[0], 0)
    return y * y * y


def _bracket(
    y: Vector,
    gy: Optional[Vector],
    second_order: bool,
    higher_order: bool,
    counter: Optional[OpCounter],
) -> Matrix:
    n = y.shape[0]
    H = None
    if second_order:
        H = np.outer(y, y) - np.eye(n, dtype=y.dtype)
        if counter is not None:
            counter.add(STAGE_BRACKET, n * n, n)
    if higher_order:
        G = np.outer(gy, y)
        # exact antisymmetry: (a - b) == -(b - a) in IEEE arithmetic
        antisymmetric = G - G.T
        if counter is not None:
            counter.add(STAGE_BRACKET, n * n, n * n)
        if H is None:
            H = antisymmetric
        else:
            H = H + antisymmetric
            if counter is not None:
                counter.add(STAGE_BRACKET, 0, n * n)
    return H


def _update(
    values: Matrix,
    x: Vector,
    learning_rate,
    second_order: bool,
    higher_order: bool,
    counter: Optional[OpCounter],
) -> Tuple[Vector, Matrix]:
    """One EASI step on raw arrays; callers check dimensions and finiteness."""
    n, d = values.shape
    with np.errstate(over="ignore", invalid="ignore"):
        y = _output(values, x, counter)
        gy = _cubic(y, counter) if higher_order else None
        H = _bracket(y, gy, second_order, higher_order, counter)
        step = H @ values
        updated = values - learning_rate * step
    if counter is not None:
        counter.matmat(STAGE_PRODUCT, n, n, d)
        counter.add(STAGE_UPDATE, n * d, n * d)
    return y, updated


def _check_vector(x, length: int, what: str = "input") -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != length:
        raise ArgumentError(f"expected {what} vector of length {length}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ArgumentError(f"{what} vector must be finite")
    return x


def forward(B: SeparationMatrix, x: Vector, counter: Optional[OpCounter] = None) -> Vector:
    """Output features y = B x."""
    x = _check_vector(x, B.m)
    return _output(B.values, x.astype(B.values.dtype, copy=False), counter)


def g_cubic(y: Vector, counter: Optional[OpCounter] = None) -> Vector:
    """Elementwise cube."""
    y = np.asarray(y)
    return _cubic(y, counter)


def relative_gradient(
    y: Vector,
    gy: Optional[Vector],
    include_second_order: bool = True,
    include_higher_order: bool = True,
    counter: Optional[OpCounter] = None,
) -> Matrix:
    """Assemble the bracket term H from the enabled terms.

    Raises:
        ConfigurationError: If both terms are disabled.
        ArgumentError: If y and g(y) differ in length.
    """
    if not (include_second_order or include_higher_order):
        raise ConfigurationError("at least one of the second-order and higher-order terms must be on")
    y = np.asarray(y)
    if include_higher_order:
        if gy is None:
            raise ArgumentError("the higher-order term needs g(y)")
        gy = np.asarray(gy)
        if gy.shape != y.shape:
            raise ArgumentError(f"y has shape {y.shape} but g(y) has shape {gy.shape}")
    return _bracket(y, gy, include_second_order, include_higher_order, counter)


def _step_size(cfg: EasiConfig):
    return cfg.precision.dtype(cfg.learning_rate)


def update_step(
    B: SeparationMatrix,
    x: Vector,
    cfg: EasiConfig,
    counter: Optional[OpCounter] = None,
    sample_index: int = 0,
) -> Tuple[Vector, SeparationMatrix]:
    """One EASI update. Returns (y, B'); B is left unchanged.

    Raises:
        DivergenceError: If B' has non-finite entries.
    """
    x = _check_vector(x, B.m)
    dtype = cfg.precision.dtype
    values = B.values.astype(dtype, copy=False)
    y, updated = _update(
        values,
        x.astype(dtype, copy=False),
        _step_size(cfg),
        cfg.include_second_order,
        cfg.include_higher_order,
        counter,
    )
    if not np.all(np.isfinite(updated)):
        raise DivergenceError(sample_index)
    return y, SeparationMatrix._wrap(updated)


def batch_update_step(
    B: SeparationMatrix,
    X: Matrix,
    cfg: EasiConfig,
    counter: Optional[OpCounter] = None,
    sample_index: int = 0,
) -> SeparationMatrix:
    """One update with H averaged over the rows of X (all outputs use the same B)."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != B.m or X.shape[0] < 1:
        raise ArgumentError(f"expected a non-empty batch with {B.m} features, got shape {X.shape}")
    dtype = cfg.precision.dtype
    values = B.values.astype(dtype, copy=False)
    X = X.astype(dtype, copy=False)
    b, d = X.shape
    n = values.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        Y = X @ values.T
        H = np.zeros((n, n), dtype=dtype)
        if cfg.include_second_order:
            H = H + (Y.T @ Y) / dtype(b) - np.eye(n, dtype=dtype)
        if cfg.include_higher_order:
            G = ((Y * Y * Y).T @ Y) / dtype(b)
            H = H + (G - G.T)
        updated = values - _step_size(cfg) * (H @ values)
    if counter is not None:
        counter.matmat(STAGE_OUTPUT, b, d, n)
        counter.add(STAGE_NONLINEARITY, 2 * b * n * int(cfg.include_higher_order), 0)
        counter.matmat(STAGE_PRODUCT, n, n, d)
        counter.add(STAGE_UPDATE, n * d, n * d)
    if not np.all(np.isfinite(updated)):
        raise DivergenceError(sample_index)
    return SeparationMatrix._wrap(updated)


def initial_separation(
    n: int, d: int, cfg: EasiConfig, samples: Optional[Matrix] = None
) -> SeparationMatrix:
    """B0 per ``cfg.init_scheme``.

    truncated_identity gives [I_n | 0], seeded_orthonormal the transpose of a seeded QR
    factor. principal needs the N x d training ``samples``: its rows are the n leading
    eigenvectors of X^T X / N divided by the square root of their eigenvalues, so
    E[y y^T] = I on the training set.

    Raises:
        ConfigurationError: If principal is requested without samples.
        ArgumentError: If the samples span fewer than n directions.
    """
    dtype = cfg.precision.dtype
    if cfg.init_scheme is InitScheme.TRUNCATED_IDENTITY:
        return SeparationMatrix(np.eye(n, d, dtype=dtype))
    if cfg.init_scheme is InitScheme.PRINCIPAL:
        if samples is None:
            raise ConfigurationError("the principal init needs the training samples")
        X = np.asarray(samples, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != d:
            raise ArgumentError(f"expected samples with {d} columns, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ArgumentError("training samples must be finite")
        eigenvalues, eigenvectors = np.linalg.eigh(X.T @ X / X.shape[0])
        leading = np.argsort(eigenvalues)[::-1][:n]
        eigenvalues, eigenvectors = eigenvalues[leading], eigenvectors[:, leading]
        if eigenvalues[-1] <= PRINCIPAL_RANK_TOL * max(eigenvalues[0], np.finfo(float).tiny):
            raise ArgumentError(f"training samples span fewer than n={n} directions")
        # largest-magnitude entry of every eigenvector is positive
        peaks = eigenvectors[np.argmax(np.abs(eigenvectors), axis=0), np.arange(n)]
        eigenvectors = eigenvectors * np.where(peaks < 0, -1.0, 1.0)
        return SeparationMatrix((eigenvectors / np.sqrt(eigenvalues)).T.astype(dtype))
    rng = make_rng(cfg.init_seed)
    gaussian = rng.standard_normal((d, n))
    q, r = np.linalg.qr(gaussian)
    # fix the sign ambiguity of QR so the factor is a function of the seed alone
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return SeparationMatrix((q * signs).T.astype(dtype))


SampleSource = Union[Dataset, Matrix, EpochSource]


def _epoch_matrix(source: SampleSource) -> np.ndarray:
    if isinstance(source, Dataset):
        return source.samples
    if callable(source):
        produced = source()
        return produced if isinstance(produced, np.ndarray) else np.array(list(produced))
    return np.asarray(source)


def train(
    samples: SampleSource,
    n: int,
    cfg: EasiConfig,
    counter: Optional[OpCounter] = None,
) -> Tuple[SeparationMatrix, TrainTrace]:
    """Run EASI until the epoch-level relative update drops below the tolerance.

    Args:
        samples: A Dataset, an N x d matrix, or a zero-argument callable returning the
            N x d matrix of one epoch (called once per epoch, samples visited in order).
        n (int): Output dimension.
        cfg (EasiConfig): Update and loop settings.

    Raises:
        ConfigurationError: If n is outside [1, d].
        DivergenceError: If the separation matrix diverges.
    """
    X = _epoch_matrix(samples)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ArgumentError(f"training needs a non-empty sample matrix, got shape {X.shape}")
    d = X.shape[1]
    if not 1 <= n <= d:
        raise ConfigurationError(f"output dimension n={n} must be in [1, {d}]")

    dtype = cfg.precision.dtype
    mu = _step_size(cfg)
    B = initial_separation(n, d, cfg, X)
    values = B.values
    magnitudes: List[float] = []
    converged = False
    logger.info(
        "Training EASI: n=%d d=%d samples=%d mu=%g terms=(%s, %s) batch=%d",
        n,
        d,
        X.shape[0],
        cfg.learning_rate,
        cfg.include_second_order,
        cfg.include_higher_order,
        cfg.batch_size,
    )

    for epoch in range(1, cfg.max_epochs + 1):
        if epoch > 1 and callable(samples) and not isinstance(samples, Dataset):
            X = _epoch_matrix(samples)
        if not np.all(np.isfinite(X)):
            raise ArgumentError("training samples must be finite")
        X = X.astype(dtype, copy=False)
        start = values
        if cfg.batch_size == 1:
            for index in range(X.shape[0]):
                _, values = _update(
                    values,
                    X[index],
                    mu,
                    cfg.include_second_order,
                    cfg.include_higher_order,
                    counter,
                )
                if not np.all(np.isfinite(values)):
                    logger.error("EASI diverged at sample %d of epoch %d", index, epoch)
                    raise DivergenceError(index, epoch)
        else:
            current = SeparationMatrix._wrap(values)
            for first in range(0, X.shape[0], cfg.batch_size):
                try:
                    current = batch_update_step(
                        current, X[first : first + cfg.batch_size], cfg, counter, sample_index=first
                    )
                except DivergenceError as e:
                    logger.error("EASI diverged in the batch starting at sample %d of epoch %d", first, epoch)
                    raise DivergenceError(first, epoch) from e
            values = current.values

        start64 = start.astype(np.float64)
        magnitude = float(
            np.linalg.norm(values.astype(np.float64) - start64) / max(np.linalg.norm(start64), np.finfo(float).tiny)
        )
        magnitudes.append(magnitude)
        trace_logger.debug("%d\t%d\t%d\t%.9e", n, d, epoch, magnitude)
        if magnitude < cfg.convergence_tol:
            converged = True
            break

    logger.info(
        "EASI finished after %d epochs (converged=%s, last update %.3e)",
        len(magnitudes),
        converged,
        magnitudes[-1],
    )
    return (
        SeparationMatrix._wrap(values),
        TrainTrace(magnitudes=magnitudes, epochs_run=len(magnitudes), converged=converged),
    )
