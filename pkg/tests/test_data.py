import numpy as np
import pytest
from numpy.testing import assert_array_equal

from src.easi_core.data import (
    WAVEFORM_SIGNAL_FEATURES,
    Dataset,
    SyntheticIcaSpec,
    base_waves,
    feature_statistics,
    generate_ica_mixture,
    generate_waveform,
    load_csv,
    save_csv,
    split,
)
from src.easi_core.exceptions import ArgumentError, DataFormatError
from src.easi_core.modes import SourceDistribution


@pytest.fixture
def csv_file(tmp_path):
    """Write text to a CSV file and return its path."""

    def _write(text, name="data.csv"):
        path = tmp_path / name
        path.write_text(text)
        return path

    return _write


def test_waveform_shapes():
    """5000 samples with all 40 features, or 32 after dropping the last eight."""
    full = generate_waveform(5000, seed=1)
    assert full.sample_count == 5000
    assert full.feature_count == 40
    assert full.num_classes == 3
    assert set(np.unique(full.labels)) <= {0, 1, 2}

    reduced = generate_waveform(5000, seed=1, drop_last_k=8)
    assert reduced.feature_count == 32
    assert_array_equal(reduced.samples, full.samples[:, :32])


def test_waveform_is_deterministic():
    """The same seed gives bit-identical datasets."""
    assert generate_waveform(100, seed=5) == generate_waveform(100, seed=5)
    assert generate_waveform(100, seed=5) != generate_waveform(100, seed=6)


@pytest.mark.parametrize("drop", [-1, 40, 41])
def test_waveform_invalid_drop(drop):
    """Dropping must leave at least one feature."""
    with pytest.raises(ArgumentError):
        generate_waveform(10, seed=0, drop_last_k=drop)


def test_base_waves_are_triangles():
    """Height-6 triangles peaking at positions 7, 11 and 15."""
    waves = base_waves()
    assert waves.shape == (3, WAVEFORM_SIGNAL_FEATURES)
    assert_array_equal(waves.argmax(axis=1), [6, 10, 14])
    assert_array_equal(waves.max(axis=1), [6.0, 6.0, 6.0])
    assert waves[0, 0] == 0.0 and waves[0, 1] == 1.0


def test_waveform_class_means():
    """Class (a, b) has mean (h_a + h_b) / 2 on the signal features."""
    data = generate_waveform(100_000, seed=11)
    waves = base_waves()
    for label, (a, b) in enumerate([(0, 1), (0, 2), (1, 2)]):
        rows = data.samples[data.labels == label, :WAVEFORM_SIGNAL_FEATURES]
        expected = (waves[a] + waves[b]) / 2.0
        # per-feature std is at most sqrt(1 + 36/12) = 2
        bound = 4.0 * 2.0 / np.sqrt(rows.shape[0])
        assert np.all(np.abs(rows.mean(axis=0) - expected) < bound)


def test_waveform_noise_features():
    """The trailing 19 features are standard normal noise."""
    noise = generate_waveform(10_000, seed=2).samples[:, WAVEFORM_SIGNAL_FEATURES:]
    assert noise.shape[1] == 19
    assert np.all(np.abs(noise.mean(axis=0)) < 0.05)
    assert np.all((noise.var(axis=0) > 0.9) & (noise.var(axis=0) < 1.1))


def test_load_csv_with_labels(csv_file):
    """Label column is removed from the features."""
    data = load_csv(csv_file("1,2,0\n3,4,1\n5,6,0\n"), label_column=2)
    assert data.sample_count == 3
    assert data.feature_count == 2
    assert_array_equal(data.labels, [0, 1, 0])
    assert_array_equal(data.samples, [[1, 2], [3, 4], [5, 6]])


def test_load_csv_negative_label_column(csv_file):
    """-1 selects the last column."""
    data = load_csv(csv_file("1,2,0\n3,4,1\n"), label_column=-1)
    assert_array_equal(data.labels, [0, 1])


def test_load_csv_header_and_blank_lines(csv_file):
    """A non-numeric first row is a header; blank lines are skipped."""
    data = load_csv(csv_file("a,b\n1,2\n\n3,4\n"))
    assert_array_equal(data.samples, [[1, 2], [3, 4]])
    assert not data.has_labels


def test_load_csv_empty(csv_file):
    with pytest.raises(DataFormatError):
        load_csv(csv_file(""))


def test_load_csv_width_mismatch(csv_file):
    """The error names the offending line."""
    with pytest.raises(DataFormatError) as excinfo:
        load_csv(csv_file("1,2\n1,2,3\n"))
    assert excinfo.value.line_number == 2


def test_load_csv_non_numeric(csv_file):
    with pytest.raises(DataFormatError) as excinfo:
        load_csv(csv_file("1,2\n3,x\n"))
    assert excinfo.value.line_number == 2


def test_load_csv_bad_label_line_number(csv_file):
    """Line numbers count the header."""
    with pytest.raises(DataFormatError) as excinfo:
        load_csv(csv_file("x,label\n1,0\n2,1.5\n"), label_column=1)
    assert excinfo.value.line_number == 3


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "missing.csv")


def test_save_then_load(tmp_path):
    """Saved files read back exactly, labels last."""
    data = generate_waveform(20, seed=3, drop_last_k=30)
    path = tmp_path / "waveform.csv"
    save_csv(data, path)
    assert load_csv(path, label_column=-1) == data


def test_split_partitions_in_order():
    """First n_train samples train, the rest test; nothing shuffled."""
    data = generate_waveform(5000, seed=0)
    train, test = split(data, 4000)
    assert (train.sample_count, test.sample_count) == (4000, 1000)
    assert_array_equal(np.vstack([train.samples, test.samples]), data.samples)
    assert_array_equal(np.concatenate([train.labels, test.labels]), data.labels)


def test_split_two_samples():
    train, test = split(Dataset([[1.0], [2.0]]), 1)
    assert train.sample_count == test.sample_count == 1


@pytest.mark.parametrize("n_train", [0, 3])
def test_split_out_of_range(n_train):
    """An empty side is rejected."""
    with pytest.raises(ArgumentError):
        split(Dataset([[1.0], [2.0], [3.0]]), n_train)


def test_dataset_rejects_bad_labels():
    with pytest.raises(ArgumentError):
        Dataset([[1.0], [2.0]], labels=[0])
    with pytest.raises(ArgumentError):
        Dataset([[1.0], [2.0]], labels=[0, -1])
    with pytest.raises(ArgumentError):
        Dataset([[np.nan]])


def test_feature_statistics_constant_column():
    """Zero deviation maps to 1 so standardization stays finite."""
    mean, std = feature_statistics(np.array([[1.0, 5.0], [3.0, 5.0]]))
    assert_array_equal(mean, [2.0, 5.0])
    assert_array_equal(std, [1.0, 1.0])


def test_identity_mixing_returns_sources():
    data, sources = generate_ica_mixture(SyntheticIcaSpec(np.eye(2)), 50, seed=4)
    assert_array_equal(data.samples, sources)


def test_mixture_is_deterministic():
    spec = SyntheticIcaSpec([[1.0, 0.5], [0.2, 1.0]], SourceDistribution.LAPLACE)
    first, _ = generate_ica_mixture(spec, 1000, seed=9)
    second, _ = generate_ica_mixture(spec, 1000, seed=9)
    assert first == second


def test_uniform_sources_kurtosis():
    """Uniform sources have excess kurtosis -1.2."""
    _, sources = generate_ica_mixture(SyntheticIcaSpec(np.eye(3)), 100_000, seed=0)
    centered = sources - sources.mean(axis=0)
    kurtosis = (centered**4).mean(axis=0) / (centered**2).mean(axis=0) ** 2 - 3.0
    assert np.all((kurtosis > -1.3) & (kurtosis < -1.1))


@pytest.mark.parametrize("distribution", list(SourceDistribution))
def test_sources_have_unit_variance(distribution):
    _, sources = generate_ica_mixture(SyntheticIcaSpec(np.eye(2), distribution), 50_000, seed=1)
    assert np.all(np.abs(sources.mean(axis=0)) < 0.03)
    assert np.all(np.abs(sources.var(axis=0) - 1.0) < 0.05)


def test_rank_deficient_mixing_rejected():
    with pytest.raises(ArgumentError):
        SyntheticIcaSpec([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(ArgumentError):
        SyntheticIcaSpec(np.ones((2, 3)))
