"""
Downstream evaluation of reduced features: a small multilayer perceptron trained with
mini-batch SGD on softmax cross-entropy, classification accuracy, and two separation
diagnostics (whiteness of the outputs and the Amari index against a known mixing matrix).
"""

import csv
import logging
from pathlib import Path
from typing import Iterable, List, Optional, TextIO, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

from src.easi_core.data import Dataset
from src.easi_core.exceptions import ArgumentError, DiagnosticError
from src.easi_core.seeding import make_rng
from src.easi_core.types import Matrix, MetricsRow

logger = logging.getLogger("reduction_engine")

METRICS_COLUMNS = ("mode", "m", "p", "n", "seed", "accuracy", "whitenessError", "amariIndex")


class MlpConfig(BaseModel):
    """Topology and trainer settings of the classifier."""

    hidden_layers: List[int] = Field(default_factory=lambda: [64, 64])
    epochs: int = Field(100, ge=1)
    learning_rate: float = Field(0.01, gt=0)
    batch_size: int = Field(32, ge=1)
    seed: int = Field(0, ge=0)

    @field_validator("hidden_layers")
    @classmethod
    def _positive_widths(cls, widths):
        if any(width < 1 for width in widths):
            raise ValueError("hidden layer widths must be positive")
        return widths


def _relu(x):
    return np.maximum(x, 0.0)


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=1, keepdims=True)


class Mlp:
    """
    Rectifier hidden layers followed by a softmax output layer.

    Attributes:
        weights (list): fan_in x fan_out weight matrices, input layer first.
        biases (list): bias vector of each layer.
    """

    def __init__(self, weights: List[Matrix], biases: List[np.ndarray]):
        if not weights or len(weights) != len(biases):
            raise ArgumentError("an MLP needs one bias vector per weight matrix")
        for index, (weight, bias) in enumerate(zip(weights, biases)):
            if bias.shape != (weight.shape[1],):
                raise ArgumentError(f"layer {index}: bias shape {bias.shape} != ({weight.shape[1]},)")
            if index and weights[index - 1].shape[1] != weight.shape[0]:
                raise ArgumentError(f"layer {index} does not chain from layer {index - 1}")
        self.weights = weights
        self.biases = biases

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[1]

    def _activations(self, X: Matrix) -> List[Matrix]:
        activations = [X]
        for weight, bias in zip(self.weights[:-1], self.biases[:-1]):
            activations.append(_relu(activations[-1] @ weight + bias))
        activations.append(activations[-1] @ self.weights[-1] + self.biases[-1])
        return activations

    def logits(self, X: Matrix) -> Matrix:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ArgumentError(f"expected samples with {self.input_dim} features, got shape {X.shape}")
        return self._activations(X)[-1]

    def predict(self, X: Matrix) -> np.ndarray:
        # argmax returns the first maximum: ties go to the lower class index
        return np.argmax(self.logits(X), axis=1)


def train_mlp(features: Dataset, cfg: MlpConfig) -> Mlp:
    """Train an MLP on a labeled dataset; deterministic given ``cfg.seed``.

    Raises:
        ArgumentError: If the dataset is unlabeled or has fewer than two classes present.
    """
    if not features.has_labels:
        raise ArgumentError("training an MLP needs labels")
    if np.unique(features.labels).size < 2:
        raise ArgumentError("training an MLP needs at least two classes")

    X = features.samples.astype(np.float64)
    labels = features.labels
    num_classes = max(features.num_classes, 2)
    targets = np.eye(num_classes)[labels]
    rng = make_rng(cfg.seed)

    widths = [X.shape[1]] + list(cfg.hidden_layers) + [num_classes]
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    model = Mlp(weights, biases)

    samples = X.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(samples)
        for first in range(0, samples, cfg.batch_size):
            batch = order[first : first + cfg.batch_size]
            activations = model._activations(X[batch])
            # gradient of the mean cross-entropy with respect to the logits
            delta = (_softmax(activations[-1]) - targets[batch]) / batch.size
            for layer in range(len(weights) - 1, -1, -1):
                grad_weight = activations[layer].T @ delta
                grad_bias = delta.sum(axis=0)
                if layer:
                    delta = (delta @ weights[layer].T) * (activations[layer] > 0.0)
                weights[layer] -= cfg.learning_rate * grad_weight
                biases[layer] -= cfg.learning_rate * grad_bias
        if logger.isEnabledFor(logging.DEBUG) and (epoch + 1) % 25 == 0:
            logger.debug("MLP epoch %d: training accuracy %.4f", epoch + 1, accuracy(model, features))
    return model


def accuracy(model: Mlp, test: Dataset) -> float:
    """Fraction of samples whose argmax prediction equals the label."""
    if not test.has_labels:
        raise ArgumentError("accuracy needs labels")
    if test.feature_count != model.input_dim:
        raise ArgumentError(
            f"model expects {model.input_dim} features, dataset has {test.feature_count}"
        )
    return float(np.mean(model.predict(test.samples) == test.labels))


def covariance_diagnostic(Z: Matrix) -> Tuple[Matrix, float]:
    """Population covariance of Z (rows = samples) and its max-abs distance to I."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise ArgumentError(f"covariance needs at least 2 samples, got shape {Z.shape}")
    centered = Z - Z.mean(axis=0)
    sigma = centered.T @ centered / Z.shape[0]
    whiteness_error = float(np.max(np.abs(sigma - np.eye(Z.shape[1]))))
    return sigma, whiteness_error


def amari_index(B: Matrix, A: Matrix) -> float:
    """Amari separation index of P = B A, normalized to [0, 1].

    Rows of |P| are first scaled to unit maximum, so the index ignores the scale of
    each estimated component. Zero means P is a scaled permutation.

    Raises:
        ArgumentError: If B A is not square.
        DiagnosticError: If B A is singular.
    """
    B = np.asarray(B, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if B.ndim != 2 or A.ndim != 2 or B.shape[1] != A.shape[0] or B.shape[0] != A.shape[1]:
        raise ArgumentError(f"B {B.shape} and A {A.shape} do not give a square product")
    P = B @ A
    n = P.shape[0]
    if np.linalg.matrix_rank(P) < n:
        raise DiagnosticError("B A is singular; the Amari index is undefined")
    if n == 1:
        return 0.0
    magnitude = np.abs(P)
    magnitude = magnitude / magnitude.max(axis=1, keepdims=True)
    row_leak = (magnitude.sum(axis=1) / magnitude.max(axis=1) - 1.0).sum()
    column_leak = (magnitude.sum(axis=0) / magnitude.max(axis=0) - 1.0).sum()
    return float((row_leak + column_leak) / (2.0 * n * (n - 1)))


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_metrics_tsv(rows: Iterable[MetricsRow], out: Union[str, Path, TextIO]) -> None:
    """Write metrics rows as TSV with the fixed column set."""
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as f:
            write_metrics_tsv(rows, f)
        return
    writer = csv.writer(out, delimiter="\t", lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for row in rows:
        writer.writerow([_cell(row.get(column)) for column in METRICS_COLUMNS])


def metrics_row(
    mode: str,
    m: int,
    p: Optional[int],
    n: int,
    seed: int,
    accuracy_value: Optional[float] = None,
    whiteness_error: Optional[float] = None,
    amari: Optional[float] = None,
) -> MetricsRow:
    return MetricsRow(
        mode=mode,
        m=m,
        p=p,
        n=n,
        seed=seed,
        accuracy=accuracy_value,
        whitenessError=whiteness_error,
        amariIndex=amari,
    )
