"""
Sparse ternary random projection.

Entries of R are drawn i.i.d. from {+1: 1/(2p), 0: 1 - 1/p, -1: 1/(2p)} where p is
the number of output rows. The projection v = R x uses additions and subtractions
only, accumulated left to right over the columns of R. No scaling is applied to R.
"""

import logging
from typing import Optional

import numpy as np

from .costmodel import STAGE_PROJECTION, OpCounter
from .exceptions import ArgumentError
from .seeding import make_rng
from .types import Matrix, Vector

logger = logging.getLogger("easi_core")

TERNARY_VALUES = np.array([-1, 0, 1], dtype=np.int8)


class TernaryMatrix:
    """Immutable p x m matrix with entries in {-1, 0, +1}, reproducible from (rows, cols, seed).

    Attributes:
        rows (int): Output dimension p.
        cols (int): Input dimension m.
        seed (int): Seed the entries were drawn with.
        entries (np.ndarray): int8 matrix of the entries.
    """

    def __init__(self, rows: int, cols: int, seed: int, entries):
        entries = np.array(entries, dtype=np.int8, copy=True)
        if entries.shape != (rows, cols):
            raise ArgumentError(f"entries have shape {entries.shape}, expected {(rows, cols)}")
        if not np.all(np.isin(entries, TERNARY_VALUES)):
            raise ArgumentError("ternary matrix entries must be -1, 0 or +1")
        entries.flags.writeable = False
        self.rows = rows
        self.cols = cols
        self.seed = seed
        self.entries = entries
        # per-column row indices of +1 and -1 entries
        self._plus = [np.flatnonzero(entries[:, j] == 1) for j in range(cols)]
        self._minus = [np.flatnonzero(entries[:, j] == -1) for j in range(cols)]

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.entries))

    def __eq__(self, other):
        if not isinstance(other, TernaryMatrix):
            return False
        return self.seed == other.seed and np.array_equal(self.entries, other.entries)

    def __repr__(self):
        return f"TernaryMatrix(rows={self.rows}, cols={self.cols}, seed={self.seed})"


def sample_projection(out_dim: int, in_dim: int, seed: int) -> TernaryMatrix:
    """Draw an out_dim x in_dim ternary projection matrix.

    Raises:
        ArgumentError: If out_dim < 1 or out_dim > in_dim.
    """
    if out_dim < 1:
        raise ArgumentError("projection output dimension must be at least 1")
    if out_dim > in_dim:
        raise ArgumentError(
            f"projection cannot expand: output dimension {out_dim} > input dimension {in_dim}"
        )
    half = 1.0 / (2.0 * out_dim)
    rng = make_rng(seed)
    entries = rng.choice(TERNARY_VALUES, size=(out_dim, in_dim), p=[half, 1.0 - 2.0 * half, half])
    logger.debug(
        "Sampled %dx%d ternary projection (seed %d, %d nonzeros)",
        out_dim,
        in_dim,
        seed,
        int(np.count_nonzero(entries)),
    )
    return TernaryMatrix(out_dim, in_dim, seed, entries)


def project_batch(R: TernaryMatrix, X: Matrix, counter: Optional[OpCounter] = None) -> Matrix:
    """Project every row of X (N x m) to p dimensions: returns N x p.

    Each output accumulates its column contributions left to right, starting from zero,
    so row i of the result equals ``project(R, X[i])`` bit for bit.
    """
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != R.cols:
        raise ArgumentError(f"expected samples with {R.cols} features, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ArgumentError("samples must be finite")
    V = np.zeros((X.shape[0], R.rows), dtype=X.dtype if np.issubdtype(X.dtype, np.floating) else np.float64)
    for j in range(R.cols):
        column = X[:, j : j + 1]
        if R._plus[j].size:
            V[:, R._plus[j]] += column
        if R._minus[j].size:
            V[:, R._minus[j]] -= column
    if counter is not None:
        counter.add(STAGE_PROJECTION, 0, R.nonzero_count * X.shape[0])
    return V


def project(R: TernaryMatrix, x: Vector, counter: Optional[OpCounter] = None) -> Vector:
    """v = R x using only additions and subtractions."""
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != R.cols:
        raise ArgumentError(f"expected a vector of length {R.cols}, got shape {x.shape}")
    return project_batch(R, x[np.newaxis, :], counter=counter)[0]
