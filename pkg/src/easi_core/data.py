"""
Datasets for the reduction pipeline: the Waveform (version 2) generator, CSV
ingestion, order-preserving train/test splitting and synthetic ICA mixtures with
known sources.

The three Waveform base waves are the triangular pulses of the published dataset
definition (height 6 over 21 points, peaking at positions 7, 11 and 15). Each class
mixes one pair of them; the remaining 19 features are pure N(0, 1) noise.
"""

import csv
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from .exceptions import ArgumentError, DataFormatError
from .modes import SourceDistribution
from .seeding import make_rng
from .types import Matrix

logger = logging.getLogger("easi_core")

WAVEFORM_FEATURES = 40
WAVEFORM_SIGNAL_FEATURES = 21
WAVE_PEAKS = (7, 11, 15)
WAVE_HEIGHT = 6.0
# class index -> pair of base waves it mixes
CLASS_WAVE_PAIRS = ((0, 1), (0, 2), (1, 2))


def base_waves() -> Matrix:
    """The three base waves as a 3x21 matrix (positions 1..21)."""
    positions = np.arange(1, WAVEFORM_SIGNAL_FEATURES + 1, dtype=np.float64)
    return np.stack(
        [np.maximum(WAVE_HEIGHT - np.abs(positions - peak), 0.0) for peak in WAVE_PEAKS]
    )


class Dataset:
    """Immutable sample matrix (rows = samples) with optional integer class labels.

    Attributes:
        samples (np.ndarray): sample_count x feature_count finite reals.
        labels (Optional[np.ndarray]): class index per sample.
        num_classes (int): number of classes (0 when unlabeled).
    """

    def __init__(
        self,
        samples,
        labels=None,
        num_classes: Optional[int] = None,
    ):
        samples = np.array(samples, dtype=np.float64, copy=True)
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise ArgumentError(f"samples must be a non-empty 2-D matrix, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ArgumentError("samples must be finite")
        samples.flags.writeable = False
        self._samples = samples

        self._labels = None
        self._num_classes = 0
        if labels is not None:
            labels = np.array(labels, copy=True)
            if labels.ndim != 1 or labels.shape[0] != samples.shape[0]:
                raise ArgumentError(
                    f"expected {samples.shape[0]} labels, got shape {labels.shape}"
                )
            if not np.issubdtype(labels.dtype, np.integer):
                if not np.all(np.equal(np.mod(labels, 1), 0)):
                    raise ArgumentError("labels must be integers")
            labels = labels.astype(np.int64)
            if np.any(labels < 0):
                raise ArgumentError("labels must be non-negative")
            inferred = int(labels.max()) + 1
            num_classes = inferred if num_classes is None else int(num_classes)
            if inferred > num_classes:
                raise ArgumentError(f"label {inferred - 1} outside [0, {num_classes})")
            labels.flags.writeable = False
            self._labels = labels
            self._num_classes = num_classes

    @property
    def samples(self) -> Matrix:
        return self._samples

    @property
    def labels(self) -> Optional[np.ndarray]:
        return self._labels

    @property
    def has_labels(self) -> bool:
        return self._labels is not None

    @property
    def num_classes(self) -> int:
        return self._num_classes

    @property
    def feature_count(self) -> int:
        return self._samples.shape[1]

    @property
    def sample_count(self) -> int:
        return self._samples.shape[0]

    def __len__(self):
        return self.sample_count

    def __repr__(self):
        return (
            f"Dataset(samples={self.sample_count}, features={self.feature_count}, "
            f"classes={self.num_classes})"
        )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return False
        if self.has_labels != other.has_labels:
            return False
        same_labels = not self.has_labels or np.array_equal(self.labels, other.labels)
        return np.array_equal(self.samples, other.samples) and same_labels

    def rows(self, start: int, stop: int) -> "Dataset":
        """Contiguous slice of samples [start, stop)."""
        labels = None if self._labels is None else self._labels[start:stop]
        return Dataset(
            self._samples[start:stop],
            labels,
            num_classes=self._num_classes if labels is not None else None,
        )

    def with_samples(self, samples) -> "Dataset":
        """Same labels, new features (used for reduced-space datasets)."""
        return Dataset(
            samples,
            self._labels,
            num_classes=self._num_classes if self._labels is not None else None,
        )


def generate_waveform(n_samples: int, seed: int, drop_last_k: int = 0) -> Dataset:
    """Generate Waveform (version 2) samples.

    Args:
        n_samples (int): Number of samples.
        seed (int): Seed of the generator; equal seeds give bit-identical datasets.
        drop_last_k (int): Number of trailing features removed (8 gives the 32-feature set).
    """
    if n_samples < 1:
        raise ArgumentError("n_samples must be at least 1")
    if not 0 <= drop_last_k < WAVEFORM_FEATURES:
        raise ArgumentError(f"drop_last_k must be in [0, {WAVEFORM_FEATURES}), got {drop_last_k}")

    rng = make_rng(seed)
    labels = rng.integers(0, len(CLASS_WAVE_PAIRS), size=n_samples)
    u = rng.uniform(0.0, 1.0, size=(n_samples, 1))
    noise = rng.standard_normal((n_samples, WAVEFORM_FEATURES))

    waves = base_waves()
    pairs = np.array(CLASS_WAVE_PAIRS)[labels]
    first = waves[pairs[:, 0]]
    second = waves[pairs[:, 1]]

    samples = noise
    samples[:, :WAVEFORM_SIGNAL_FEATURES] += u * first + (1.0 - u) * second
    samples = samples[:, : WAVEFORM_FEATURES - drop_last_k]
    logger.debug("Generated %d waveform samples with %d features", n_samples, samples.shape[1])
    return Dataset(samples, labels, num_classes=len(CLASS_WAVE_PAIRS))


def _parse_float(cell: str) -> Optional[float]:
    try:
        value = float(cell)
    except ValueError:
        return None
    return value


def load_csv(path: Union[str, Path], label_column: Optional[int] = None) -> Dataset:
    """Read a comma-separated file of reals.

    A first row containing any non-numeric cell is treated as a header. Blank lines are
    skipped. ``label_column`` (zero-based) is removed from the features and parsed as
    integer class labels; negative indices count from the last column.

    Raises:
        DataFormatError: On empty input, width mismatch or non-numeric cells; the message
            names the offending line.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Data file not found: {path}")

    rows: List[List[float]] = []
    line_numbers: List[int] = []
    width = None
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        for line_number, record in enumerate(reader, start=1):
            cells = [cell.strip() for cell in record]
            if not cells or all(cell == "" for cell in cells):
                continue
            values = [_parse_float(cell) for cell in cells]
            if not rows and width is None and any(value is None for value in values):
                logger.debug("Treating line %d of %s as a header", line_number, path)
                width = len(cells)
                continue
            if width is None:
                width = len(cells)
            if len(cells) != width:
                raise DataFormatError(
                    f"expected {width} columns, found {len(cells)}", line_number
                )
            for column, value in enumerate(values):
                if value is None:
                    raise DataFormatError(
                        f"non-numeric cell {cells[column]!r} in column {column}", line_number
                    )
                if not np.isfinite(value):
                    raise DataFormatError(f"non-finite cell in column {column}", line_number)
            rows.append(values)
            line_numbers.append(line_number)

    if not rows:
        raise DataFormatError(f"no data rows in {path}")

    table = np.array(rows, dtype=np.float64)
    if label_column is None:
        return Dataset(table)

    if not -table.shape[1] <= label_column < table.shape[1]:
        raise ArgumentError(f"label column {label_column} outside [0, {table.shape[1]})")
    label_column %= table.shape[1]
    if table.shape[1] < 2:
        raise DataFormatError("a labeled file needs at least one feature column")
    raw_labels = table[:, label_column]
    bad = np.flatnonzero((np.mod(raw_labels, 1) != 0) | (raw_labels < 0))
    if bad.size:
        raise DataFormatError(
            f"label {raw_labels[bad[0]]!r} is not a non-negative integer", line_numbers[bad[0]]
        )
    features = np.delete(table, label_column, axis=1)
    return Dataset(features, raw_labels.astype(np.int64))


def save_csv(d: Dataset, path: Union[str, Path], label_column: bool = True) -> None:
    """Write ``d`` as CSV with full-precision reals; labels (if any) go in the last column."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for index, row in enumerate(d.samples):
            cells = [repr(float(value)) for value in row]
            if label_column and d.has_labels:
                cells.append(str(int(d.labels[index])))
            writer.writerow(cells)


def split(d: Dataset, n_train: int) -> Tuple[Dataset, Dataset]:
    """Split into the first ``n_train`` samples and the rest, preserving order."""
    if not 0 < n_train < d.sample_count:
        raise ArgumentError(
            f"n_train must be in (0, {d.sample_count}), got {n_train}"
        )
    return d.rows(0, n_train), d.rows(n_train, d.sample_count)


def feature_statistics(samples: Matrix) -> Tuple[np.ndarray, np.ndarray]:
    """Per-feature population mean and standard deviation; zero deviations map to 1."""
    mean = samples.mean(axis=0)
    std = samples.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return mean, std


class SyntheticIcaSpec:
    """Mixing matrix and source law of a synthetic ICA problem (x = A s).

    Attributes:
        mixing_matrix (np.ndarray): m x n mixing matrix A of full column rank.
        source_distribution (SourceDistribution): law of every source component.
    """

    RANK_TOLERANCE = 1e-9

    def __init__(
        self,
        mixing_matrix,
        source_distribution: SourceDistribution = SourceDistribution.UNIFORM,
        n: Optional[int] = None,
    ):
        mixing_matrix = np.array(mixing_matrix, dtype=np.float64, copy=True)
        if mixing_matrix.ndim != 2:
            raise ArgumentError("mixing matrix must be 2-D")
        m, columns = mixing_matrix.shape
        if n is not None and n != columns:
            raise ArgumentError(f"n={n} does not match the {columns} columns of A")
        if columns > m:
            raise ArgumentError(f"mixing matrix must have m >= n, got {m}x{columns}")
        singular_values = np.linalg.svd(mixing_matrix, compute_uv=False)
        if singular_values.min() <= self.RANK_TOLERANCE:
            raise ArgumentError("mixing matrix must have full column rank")
        mixing_matrix.flags.writeable = False
        self.mixing_matrix = mixing_matrix
        self.source_distribution = SourceDistribution(source_distribution)

    @property
    def n(self) -> int:
        return self.mixing_matrix.shape[1]

    @property
    def m(self) -> int:
        return self.mixing_matrix.shape[0]


def draw_sources(
    distribution: SourceDistribution, n_samples: int, n: int, rng: np.random.Generator
) -> Matrix:
    """Zero-mean, unit-variance i.i.d. sources, n_samples x n."""
    if distribution is SourceDistribution.UNIFORM:
        bound = np.sqrt(3.0)
        return rng.uniform(-bound, bound, size=(n_samples, n))
    if distribution is SourceDistribution.LAPLACE:
        return rng.laplace(0.0, 1.0 / np.sqrt(2.0), size=(n_samples, n))
    if distribution is SourceDistribution.SIGN:
        return rng.integers(0, 2, size=(n_samples, n)).astype(np.float64) * 2.0 - 1.0
    raise ArgumentError(f"Unknown source distribution: {distribution}")


def generate_ica_mixture(
    spec: SyntheticIcaSpec, n_samples: int, seed: int
) -> Tuple[Dataset, Matrix]:
    """Draw sources and mix them: returns (mixtures, ground-truth sources)."""
    if n_samples < 1:
        raise ArgumentError("n_samples must be at least 1")
    rng = make_rng(seed)
    sources = draw_sources(spec.source_distribution, n_samples, spec.n, rng)
    samples = sources @ spec.mixing_matrix.T
    return Dataset(samples), sources
