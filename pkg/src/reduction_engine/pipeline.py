"""
Reconfigurable reduction pipeline.

    rp      x -> R x                      (no training)
    pca     x -> B x, B trained with the second-order term only
    ica     x -> B x, B trained with both terms
    rp+ica  x -> B (R x), B trained on projected samples with the higher-order term only

The same EASI update serves every trained mode; the mode only selects which bracket
terms are active.
"""

import logging
from typing import Optional, Union

import numpy as np

from src.easi_core.costmodel import STAGE_PROJECTION, OpCounter
from src.easi_core.data import Dataset, feature_statistics
from src.easi_core.easi import SeparationMatrix, TrainTrace, forward, train
from src.easi_core.exceptions import ArgumentError, ConfigurationError
from src.easi_core.modes import PipelineMode
from src.easi_core.projection import TernaryMatrix, project, project_batch, sample_projection
from src.easi_core.types import Matrix, Vector
from src.reduction_engine.config import PipelineConfig

logger = logging.getLogger("reduction_engine")


class FittedPipeline:
    """
    A trained reduction model. Immutable; ``transform`` is pure.

    Attributes:
        config (PipelineConfig): The configuration it was fitted with.
        projection (Optional[TernaryMatrix]): R (p x m) in the rp modes.
        separation (Optional[SeparationMatrix]): B (n x d) in the trained modes.
        trace (Optional[TrainTrace]): Training trace of B.
        mean, std (Optional[np.ndarray]): Standardization statistics when enabled.
    """

    def __init__(
        self,
        config: PipelineConfig,
        projection: Optional[TernaryMatrix] = None,
        separation: Optional[SeparationMatrix] = None,
        trace: Optional[TrainTrace] = None,
        mean: Optional[np.ndarray] = None,
        std: Optional[np.ndarray] = None,
    ):
        mode = config.mode
        if mode.uses_projection != (projection is not None):
            raise ConfigurationError(f"mode {mode.value} {'needs' if mode.uses_projection else 'has no'} projection")
        if mode.uses_separation != (separation is not None):
            raise ConfigurationError(f"mode {mode.value} {'needs' if mode.uses_separation else 'has no'} separation matrix")
        if projection is not None and projection.shape != (config.p, config.m):
            raise ConfigurationError(f"projection is {projection.shape}, expected {(config.p, config.m)}")
        if separation is not None and separation.shape != (config.n, config.easi_input_dim):
            raise ConfigurationError(
                f"separation matrix is {separation.shape}, expected {(config.n, config.easi_input_dim)}"
            )
        if config.standardize_input != (mean is not None and std is not None):
            raise ConfigurationError("standardization statistics must be present iff standardize_input is set")
        if mean is not None and (mean.shape != (config.m,) or std.shape != (config.m,)):
            raise ConfigurationError(f"standardization statistics must have length {config.m}")
        self.config = config
        self.projection = projection
        self.separation = separation
        self.trace = trace
        self.mean = mean
        self.std = std

    @property
    def output_dim(self) -> int:
        return self.config.n

    def _standardize(self, X):
        if self.mean is None:
            return X
        return (X - self.mean) / self.std

    def _scale(self, V, counter: Optional[OpCounter]):
        scale = self.config.rp_scale
        if scale == 1.0:
            return V
        if counter is not None:
            counter.add(STAGE_PROJECTION, V.size, 0)
        return V * scale

    def transform(self, x: Vector, counter: Optional[OpCounter] = None) -> Vector:
        """Reduce one sample of length m to n features."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.config.m:
            raise ArgumentError(f"expected a vector of length {self.config.m}, got shape {x.shape}")
        x = self._standardize(x)
        if self.projection is not None:
            x = self._scale(project(self.projection, x, counter=counter), counter)
        if self.separation is None:
            return x
        return forward(self.separation, x, counter=counter)

    def transform_batch(self, X: Matrix) -> Matrix:
        """Reduce every row of an N x m matrix."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.config.m:
            raise ArgumentError(f"expected samples with {self.config.m} features, got shape {X.shape}")
        X = self._standardize(X)
        if self.projection is not None:
            X = self._scale(project_batch(self.projection, X), None)
        if self.separation is None:
            return X
        return X @ self.separation.values.T

    def linear_map(self) -> Matrix:
        """The n x m matrix of the transform's linear part (mean removal excluded)."""
        M = np.eye(self.config.m)
        if self.std is not None:
            M = M / self.std
        if self.projection is not None:
            M = self.config.rp_scale * (self.projection.entries.astype(np.float64) @ M)
        if self.separation is not None:
            M = self.separation.values.astype(np.float64) @ M
        return M

    def __repr__(self):
        c = self.config
        return f"FittedPipeline(mode={c.mode.value}, m={c.m}, p={c.p}, n={c.n})"


def fit(
    cfg: PipelineConfig,
    train_data: Union[Dataset, Matrix],
    counter: Optional[OpCounter] = None,
) -> FittedPipeline:
    """Fit the reduction described by ``cfg`` on the training samples.

    Raises:
        ConfigurationError: If the samples do not have cfg.m features.
        DivergenceError: Propagated from EASI training.
    """
    X = train_data.samples if isinstance(train_data, Dataset) else np.asarray(train_data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ArgumentError(f"training needs a non-empty sample matrix, got shape {X.shape}")
    if X.shape[1] != cfg.m:
        raise ConfigurationError(f"config has m={cfg.m} but the samples have {X.shape[1]} features")

    mean = std = None
    if cfg.standardize_input:
        mean, std = feature_statistics(X)
        X = (X - mean) / std

    mode = cfg.mode
    logger.info("Fitting %s pipeline: m=%d p=%s n=%d on %d samples", mode.value, cfg.m, cfg.p, cfg.n, X.shape[0])
    projection = separation = trace = None

    if mode.uses_projection:
        projection = sample_projection(cfg.p, cfg.m, cfg.rp_seed)

    if mode in (PipelineMode.PCA_WHITEN, PipelineMode.ICA):
        separation, trace = train(X, cfg.n, cfg.easi, counter=counter)
    elif mode is PipelineMode.RP_THEN_ICA:
        scale = cfg.rp_scale

        def projected():
            V = project_batch(projection, X, counter=counter)
            return V if scale == 1.0 else V * scale

        source = projected() if cfg.cache_projection else projected
        separation, trace = train(source, cfg.n, cfg.easi, counter=counter)

    return FittedPipeline(cfg, projection, separation, trace, mean, std)
