import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from src.easi_core.costmodel import EASI_STAGES, OpCounter, easi_stages
from src.easi_core.easi import (
    EasiConfig,
    SeparationMatrix,
    TrainTrace,
    batch_update_step,
    forward,
    g_cubic,
    initial_separation,
    relative_gradient,
    train,
    update_step,
)
from src.easi_core.exceptions import ArgumentError, ConfigurationError, DivergenceError
from src.easi_core.modes import InitScheme, Precision
from src.easi_core.seeding import make_rng

TERMS = [(True, False), (False, True), (True, True)]


@pytest.fixture
def correlated_gaussian():
    """4-dim Gaussian samples with a non-diagonal covariance."""
    rng = make_rng(0)
    mixing = rng.standard_normal((4, 4))
    return rng.standard_normal((5000, 4)) @ mixing.T


def whitening_update(W, x, mu):
    """Plain adaptive whitening: W - mu (y y^T - I) W."""
    y = W @ x
    H = np.outer(y, y) - np.eye(W.shape[0])
    return W - mu * (H @ W)


def test_forward_hand_example():
    B = SeparationMatrix([[1.0, 2.0], [3.0, 4.0]])
    assert_array_equal(forward(B, [1.0, 1.0]), [3.0, 7.0])


def test_forward_truncated_identity():
    B = SeparationMatrix(np.eye(2, 5))
    assert_array_equal(forward(B, [5.0, 6.0, 7.0, 8.0, 9.0]), [5.0, 6.0])
    assert_array_equal(forward(B, np.zeros(5)), np.zeros(2))


def test_forward_dimension_mismatch():
    with pytest.raises(ArgumentError):
        forward(SeparationMatrix(np.eye(2, 3)), np.ones(2))


def test_forward_permutation_equivariance():
    rng = make_rng(1)
    values = rng.standard_normal((3, 5))
    x = rng.standard_normal(5)
    P = np.eye(3)[[2, 0, 1]]
    assert_array_equal(forward(SeparationMatrix(P @ values), x), P @ forward(SeparationMatrix(values), x))


@pytest.mark.parametrize(
    "y, expected",
    [([1.0, -2.0], [1.0, -8.0]), ([0.0, 0.0], [0.0, 0.0]), ([0.5], [0.125])],
)
def test_g_cubic(y, expected):
    assert_array_equal(g_cubic(np.array(y)), expected)


def test_relative_gradient_hand_example():
    H = relative_gradient(np.array([1.0, 2.0]), np.array([1.0, 8.0]))
    assert_allclose(H, [[0.0, -4.0], [8.0, 3.0]], atol=1e-12)


def test_relative_gradient_at_zero():
    zero = np.zeros(3)
    assert_array_equal(relative_gradient(zero, zero), -np.eye(3))
    assert_array_equal(relative_gradient(zero, zero, include_second_order=False), np.zeros((3, 3)))


def test_relative_gradient_needs_a_term():
    with pytest.raises(ConfigurationError):
        relative_gradient(np.ones(2), np.ones(2), include_second_order=False, include_higher_order=False)


def test_higher_order_term_is_exactly_antisymmetric():
    rng = make_rng(2)
    for _ in range(100):
        y = rng.standard_normal(5) * 3.0
        H = relative_gradient(y, g_cubic(y), include_second_order=False)
        assert_array_equal(H + H.T, np.zeros((5, 5)))


def test_update_step_both_terms():
    cfg = EasiConfig(learning_rate=0.01)
    B = SeparationMatrix(np.eye(2))
    y, updated = update_step(B, np.array([1.0, 2.0]), cfg)
    assert_array_equal(y, [1.0, 2.0])
    assert_allclose(updated.values, [[1.0, 0.04], [-0.08, 0.97]], atol=1e-12)
    # value semantics
    assert_array_equal(B.values, np.eye(2))


def test_update_step_second_order_only():
    cfg = EasiConfig(learning_rate=0.01, include_higher_order=False)
    _, updated = update_step(SeparationMatrix(np.eye(2)), np.array([1.0, 2.0]), cfg)
    assert_allclose(updated.values, [[1.0, -0.02], [-0.02, 0.97]], atol=1e-12)


def test_update_step_zero_gradient_keeps_matrix():
    cfg = EasiConfig(include_second_order=False)
    B = SeparationMatrix(make_rng(3).standard_normal((2, 3)))
    _, updated = update_step(B, np.zeros(3), cfg)
    assert updated == B


def test_whitening_mode_matches_plain_whitening_update():
    """Second-order-only EASI is the adaptive whitening rule, bit for bit."""
    rng = make_rng(4)
    cfg = EasiConfig(learning_rate=0.005, include_higher_order=False)
    W = rng.standard_normal((3, 5))
    for _ in range(50):
        x = rng.standard_normal(5)
        _, updated = update_step(SeparationMatrix(W), x, cfg)
        expected = whitening_update(W, x, 0.005)
        assert_array_equal(updated.values, expected)
        W = expected


def test_update_step_reports_divergence():
    cfg = EasiConfig(learning_rate=1e300)
    with pytest.raises(DivergenceError) as excinfo:
        update_step(SeparationMatrix(np.eye(2)), np.array([1e10, 1e10]), cfg, sample_index=17)
    assert excinfo.value.sample_index == 17


def test_rotation_drift_is_second_order():
    """Rotation-only updates keep an orthogonal B orthogonal up to mu^2 ||H||^2."""
    rng = make_rng(5)
    mu = 1e-3
    cfg = EasiConfig(learning_rate=mu, include_second_order=False)
    worst_ratio = 0.0
    largest_h = 0.0
    for _ in range(1000):
        q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        x = rng.standard_normal(4)
        x *= rng.uniform(0.0, 4.0) / np.linalg.norm(x)
        y, updated = update_step(SeparationMatrix(q), q.T @ x, cfg)
        H = relative_gradient(y, g_cubic(y), include_second_order=False)
        drift = np.linalg.norm(updated.values @ updated.values.T - np.eye(4))
        worst_ratio = max(worst_ratio, drift / mu**2)
        largest_h = max(largest_h, np.linalg.norm(H) ** 2)
    assert worst_ratio <= 10.0 * largest_h


def test_whitening_fixed_point():
    """On white data the averaged second-order term vanishes."""
    N = 20_000
    Z = make_rng(6).standard_normal((N, 4))
    mean_h = np.mean([relative_gradient(z, None, include_higher_order=False) for z in Z], axis=0)
    assert np.max(np.abs(mean_h)) < 5.0 / np.sqrt(N)


def test_easi_config_needs_a_term():
    with pytest.raises(ValidationError):
        EasiConfig(include_second_order=False, include_higher_order=False)


@pytest.mark.parametrize("field, value", [("learning_rate", 0.0), ("convergence_tol", -1.0), ("batch_size", 0)])
def test_easi_config_ranges(field, value):
    with pytest.raises(ValidationError):
        EasiConfig(**{field: value})


def test_separation_matrix_invariants():
    with pytest.raises(ArgumentError):
        SeparationMatrix(np.ones((3, 2)))
    with pytest.raises(ArgumentError):
        SeparationMatrix([[np.inf, 0.0]])


def test_initial_separation_schemes():
    assert_array_equal(initial_separation(2, 4, EasiConfig()).values, np.eye(2, 4))
    cfg = EasiConfig(init_scheme=InitScheme.SEEDED_ORTHONORMAL, init_seed=3)
    B0 = initial_separation(3, 6, cfg)
    assert_allclose(B0.values @ B0.values.T, np.eye(3), atol=1e-12)
    assert B0 == initial_separation(3, 6, cfg)


def test_train_on_zeros_converges_immediately():
    cfg = EasiConfig(include_second_order=False)
    B, trace = train(np.zeros((10, 3)), 3, cfg)
    assert_array_equal(B.values, np.eye(3))
    assert trace.converged
    assert trace.epochs_run == 1
    assert trace.magnitudes == [0.0]


def test_train_diverges_with_huge_step(correlated_gaussian):
    cfg = EasiConfig(learning_rate=10.0, max_epochs=5)
    with pytest.raises(DivergenceError):
        train(correlated_gaussian, 4, cfg)


def test_batch_divergence_keeps_its_cause(correlated_gaussian):
    cfg = EasiConfig(learning_rate=10.0, max_epochs=5, batch_size=10)
    with pytest.raises(DivergenceError) as excinfo:
        train(correlated_gaussian, 4, cfg)
    assert excinfo.value.epoch >= 1
    assert isinstance(excinfo.value.__cause__, DivergenceError)


@pytest.mark.parametrize("n", [0, 5])
def test_train_rejects_bad_output_dimension(correlated_gaussian, n):
    with pytest.raises(ConfigurationError):
        train(correlated_gaussian, n, EasiConfig())


def test_train_matches_repeated_update_steps(correlated_gaussian):
    """The training loop adds nothing to the per-sample rule."""
    X = correlated_gaussian[:300]
    cfg = EasiConfig(learning_rate=1e-3, max_epochs=2, convergence_tol=1e-15)
    B, trace = train(X, 3, cfg)
    expected = initial_separation(3, 4, cfg)
    for _ in range(2):
        for x in X:
            _, expected = update_step(expected, x, cfg)
    assert_array_equal(B.values, expected.values)
    assert trace.epochs_run == 2


def test_train_batches_average_the_gradient(correlated_gaussian):
    X = correlated_gaussian[:100]
    cfg = EasiConfig(learning_rate=1e-3, max_epochs=1, batch_size=10)
    B, _ = train(X, 4, cfg)
    expected = initial_separation(4, 4, cfg)
    for first in range(0, 100, 10):
        expected = batch_update_step(expected, X[first : first + 10], cfg)
    assert_array_equal(B.values, expected.values)


def test_batch_of_one_is_the_sample_update():
    rng = make_rng(7)
    cfg = EasiConfig(learning_rate=0.01)
    B = SeparationMatrix(rng.standard_normal((2, 3)))
    x = rng.standard_normal(3)
    _, single = update_step(B, x, cfg)
    batched = batch_update_step(B, x[np.newaxis, :], cfg)
    assert_allclose(batched.values, single.values, rtol=1e-12, atol=1e-14)


def test_train_accepts_epoch_callable(correlated_gaussian):
    X = correlated_gaussian[:200]
    calls = []

    def epoch():
        calls.append(1)
        return X

    cfg = EasiConfig(max_epochs=3, convergence_tol=1e-15)
    B_stream, _ = train(epoch, 2, cfg)
    B_matrix, _ = train(X, 2, cfg)
    assert len(calls) == 3
    assert B_stream == B_matrix


def test_single_precision_agrees_with_double(correlated_gaussian):
    X = correlated_gaussian[:500] / 4.0
    double, _ = train(X, 4, EasiConfig(max_epochs=1))
    single, _ = train(X, 4, EasiConfig(max_epochs=1, precision=Precision.SINGLE))
    assert single.values.dtype == np.float32
    x = correlated_gaussian[600]
    y_double = forward(double, x)
    assert_allclose(forward(single, x), y_double, rtol=1e-3, atol=1e-3 * np.abs(y_double).max())


def test_trace_invariants():
    with pytest.raises(ValidationError):
        TrainTrace(magnitudes=[0.1], epochs_run=2)
    with pytest.raises(ValidationError):
        TrainTrace(magnitudes=[-0.1], epochs_run=1)


@pytest.mark.parametrize("terms", TERMS)
def test_counted_operations_match_cost_model(terms):
    """Per-sample runtime counts equal the analytical stage counts."""
    second, higher = terms
    n, d = 3, 7
    cfg = EasiConfig(include_second_order=second, include_higher_order=higher)
    counter = OpCounter()
    update_step(SeparationMatrix(np.eye(n, d)), make_rng(8).standard_normal(d), cfg, counter=counter)
    for stage in easi_stages(n, d, second, higher):
        assert counter.stage(stage.name) == (stage.multipliers, stage.adders), stage.name
    assert set(counter.stages) <= set(EASI_STAGES)


def test_principal_init_whitens_training_moments(correlated_gaussian):
    cfg = EasiConfig(init_scheme=InitScheme.PRINCIPAL)
    B0 = initial_separation(2, 4, cfg, correlated_gaussian)
    moments = correlated_gaussian.T @ correlated_gaussian / correlated_gaussian.shape[0]
    assert_allclose(B0.values @ moments @ B0.values.T, np.eye(2), atol=1e-10)
    assert B0 == initial_separation(2, 4, cfg, correlated_gaussian.copy())


def test_principal_init_keeps_leading_directions():
    """Rows span the two high-variance coordinates, largest first, with positive peaks."""
    X = make_rng(2).standard_normal((4000, 4)) * np.array([1.0, 5.0, 0.1, 3.0])
    B0 = initial_separation(2, 4, EasiConfig(init_scheme=InitScheme.PRINCIPAL), X).values
    assert np.argmax(np.abs(B0[0])) == 1
    assert np.argmax(np.abs(B0[1])) == 3
    assert B0[0, 1] > 0 and B0[1, 3] > 0
    assert np.max(np.abs(B0[:, [0, 2]])) < 0.01


def test_principal_init_errors():
    cfg = EasiConfig(init_scheme=InitScheme.PRINCIPAL)
    with pytest.raises(ConfigurationError):
        initial_separation(2, 4, cfg)
    with pytest.raises(ArgumentError):
        initial_separation(2, 4, cfg, np.ones((10, 3)))
    rank_one = np.outer(np.arange(1.0, 11.0), [1.0, 2.0, 0.0, 1.0])
    with pytest.raises(ArgumentError):
        initial_separation(2, 4, cfg, rank_one)
    with pytest.raises(ArgumentError):
        train(np.zeros((10, 3)), 2, cfg)


def test_train_starts_from_principal_init(correlated_gaussian):
    X = correlated_gaussian[:50]
    cfg = EasiConfig(init_scheme=InitScheme.PRINCIPAL, include_second_order=False, max_epochs=1)
    B, _ = train(X, 3, cfg)
    expected = initial_separation(3, 4, cfg, X)
    for index, x in enumerate(X):
        _, expected = update_step(expected, x, cfg, sample_index=index)
    assert_array_equal(B.values, expected.values)
