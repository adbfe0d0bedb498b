from pathlib import Path

import numpy as np
import pytest
import yaml

from src.easi_core.data import Dataset, load_csv, save_csv
from src.easi_core.modes import InitScheme
from src.easi_core.seeding import make_rng
from src.reduction_engine import model_io
from src.reduction_engine.cli import dispatch


@pytest.fixture
def run(tmp_path):
    """Call dispatch with logs kept under tmp_path."""

    def _run(*argv):
        return dispatch(list(argv) + ["--log-dir", str(tmp_path / "logs")])

    return _run


@pytest.fixture
def train_csv(tmp_path):
    """Unlabeled 32-feature training file with bounded features."""
    path = tmp_path / "train.csv"
    save_csv(Dataset(make_rng(0).uniform(-1.0, 1.0, size=(400, 32))), path)
    return path


@pytest.fixture
def waveform_csv(tmp_path, run):
    path = tmp_path / "waveform.csv"
    assert run("gen-data", "--samples", "600", "--drop", "8", "--seed", "1", "--out", str(path)) == 0
    return path


def test_gen_data_waveform(waveform_csv):
    data = load_csv(waveform_csv, label_column=-1)
    assert (data.sample_count, data.feature_count) == (600, 32)
    assert set(np.unique(data.labels)) <= {0, 1, 2}


def test_gen_data_ica(tmp_path, run):
    out, mixing = tmp_path / "mix.csv", tmp_path / "A.csv"
    assert run("gen-data", "--kind", "ica", "--m", "5", "--n", "3", "--samples", "100", "--out", str(out), "--mixing-out", str(mixing)) == 0
    assert load_csv(out).feature_count == 5
    assert np.loadtxt(mixing, delimiter=",").shape == (5, 3)


def test_fit_writes_model(tmp_path, run, train_csv):
    model = tmp_path / "model.txt"
    status = run("fit", "--mode", "rp+ica", "--m", "32", "--p", "16", "--n", "8", "--data", str(train_csv), "--out", str(model))
    assert status == 0
    fp = model_io.load(model)
    assert fp.separation.shape == (8, 16)


def test_fit_projected_rotation_on_waveform(tmp_path, run, waveform_csv):
    """Stable settings for the rotation-only stage on generated Waveform data."""
    model = tmp_path / "model.txt"
    status = run(
        "fit", "--mode", "rp+ica", "--m", "32", "--p", "16", "--n", "8",
        "--standardize", "--rp-scale", "0.7071067811865476", "--init", "principal", "--batch", "20", "--epochs", "3",
        "--labels-col", "-1", "--data", str(waveform_csv), "--out", str(model),
    )
    assert status == 0
    fp = model_io.load(model)
    assert fp.config.easi.init_scheme is InitScheme.PRINCIPAL
    assert np.all(np.isfinite(fp.separation.values))


def test_fit_with_shipped_config_on_waveform(tmp_path, run, waveform_csv):
    model = tmp_path / "model.txt"
    config = Path(__file__).resolve().parents[1] / "configs" / "default_pipeline.yaml"
    assert run("fit", "--config", str(config), "--labels-col", "-1", "--data", str(waveform_csv), "--out", str(model)) == 0
    assert model_io.load(model).separation.shape == (8, 16)


def test_fit_is_deterministic(tmp_path, run, train_csv):
    paths = [tmp_path / "a.txt", tmp_path / "b.txt"]
    for path in paths:
        assert run("fit", "--mode", "ica", "--n", "4", "--epochs", "2", "--seed", "7", "--data", str(train_csv), "--out", str(path)) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_fit_rejects_p_below_n(tmp_path, run, train_csv):
    status = run("fit", "--mode", "rp+ica", "--m", "32", "--p", "8", "--n", "16", "--data", str(train_csv), "--out", str(tmp_path / "m.txt"))
    assert status == 1
    assert not (tmp_path / "m.txt").exists()


def test_fit_without_data_is_a_usage_error(run):
    assert run("fit", "--mode", "rp+ica", "--m", "32", "--p", "8", "--n", "16") == 1


def test_unknown_flag(run):
    assert run("cost", "--mode", "ica", "--m", "32", "--n", "8", "--colour", "blue") == 1


def test_missing_data_file(tmp_path, run):
    assert run("fit", "--mode", "pca", "--n", "2", "--data", str(tmp_path / "none.csv"), "--out", str(tmp_path / "m.txt")) == 1


def test_malformed_data_is_a_runtime_error(tmp_path, run):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n1,2,3\n")
    assert run("fit", "--mode", "pca", "--n", "1", "--data", str(bad), "--out", str(tmp_path / "m.txt")) == 2


def test_fit_with_config_file(tmp_path, run, train_csv):
    config = tmp_path / "pipeline.yaml"
    config.write_text(yaml.dump({"mode": "rp+ica", "m": 32, "p": 16, "n": 8, "easi": {"max_epochs": 3}}))
    model = tmp_path / "model.txt"
    assert run("fit", "--config", str(config), "--n", "4", "--data", str(train_csv), "--out", str(model)) == 0
    fp = model_io.load(model)
    assert fp.config.n == 4
    assert fp.config.easi.max_epochs == 3
    assert fp.trace.epochs_run <= 3


def test_transform_round_trip(tmp_path, run, waveform_csv):
    model, reduced = tmp_path / "model.txt", tmp_path / "reduced.csv"
    assert run("fit", "--mode", "rp", "--p", "8", "--labels-col", "-1", "--data", str(waveform_csv), "--out", str(model)) == 0
    assert run("transform", "--model", str(model), "--data", str(waveform_csv), "--labels-col", "-1", "--out", str(reduced)) == 0
    data = load_csv(reduced, label_column=-1)
    assert data.feature_count == 8
    assert data.labels.tolist() == load_csv(waveform_csv, label_column=-1).labels.tolist()


def test_transform_rejects_corrupt_model(tmp_path, run, waveform_csv):
    model = tmp_path / "model.txt"
    model.write_text("schema=9\n")
    assert run("transform", "--model", str(model), "--data", str(waveform_csv), "--out", str(tmp_path / "o.csv")) == 2


def test_eval_reports_metrics(tmp_path, run, waveform_csv):
    out = tmp_path / "metrics.tsv"
    status = run(
        "eval", "--mode", "pca", "--n", "8", "--standardize", "--epochs", "3", "--mlp-epochs", "5",
        "--labels-col", "-1", "--data", str(waveform_csv), "--out", str(out),
    )
    assert status == 0
    header, row = out.read_text().splitlines()
    values = dict(zip(header.split("\t"), row.split("\t")))
    assert values["mode"] == "pca"
    assert 0.0 <= float(values["accuracy"]) <= 1.0
    assert values["amariIndex"] == ""


def test_eval_needs_labels(tmp_path, run, waveform_csv):
    assert run("eval", "--mode", "pca", "--n", "8", "--data", str(waveform_csv)) == 1


def test_cost_prints_table(run, capsys):
    assert run("cost", "--mode", "ica", "--m", "32", "--n", "8") == 0
    printed = capsys.readouterr().out
    assert "mode=ica m=32 p=- n=8" in printed
    assert "total" in printed


def test_cost_tsv_and_bad_dimensions(tmp_path, run):
    tsv = tmp_path / "cost.tsv"
    assert run("cost", "--mode", "rp+ica", "--m", "32", "--p", "16", "--n", "8", "--tsv", str(tsv)) == 0
    assert tsv.read_text().splitlines()[-1].split("\t")[4] == "total"
    assert run("cost", "--mode", "rp+ica", "--m", "32", "--p", "8", "--n", "16") == 1


def test_reproduce_table2(tmp_path, run):
    out = tmp_path / "table2.tsv"
    assert run("reproduce", "table2", "--out", str(out)) == 0
    header, ica, projected = out.read_text().splitlines()
    columns = header.split("\t")
    ratio = float(dict(zip(columns, projected.split("\t")))["multiplier_ratio"])
    assert 1.7 <= ratio <= 2.0
    assert dict(zip(columns, projected.split("\t")))["savings_ratio"] == "2.0000"


def test_help_exits_cleanly():
    assert dispatch(["--help"]) == 0
