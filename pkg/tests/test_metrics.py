import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldmlab.metrics import (
    ActivationBatch,
    MetricError,
    accuracy,
    class_conditional_index,
    correlation_gap,
    correlation_index,
    correlation_stats,
)


def corrcoef_index(values):
    """Index via np.corrcoef (independent route)."""
    r = np.abs(np.corrcoef(values.T))
    m = r.shape[0]
    return (r.sum() - m) / (m * (m - 1))


def swapped_clusters(K=20_000, rho=0.9, seed=0):
    # within-class correlation rho, class means chosen so the mixture is uncorrelated
    a = np.sqrt(rho)
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, K)
    s = np.where(y == 0, 1.0, -1.0)
    z = rng.multivariate_normal([0, 0], [[1, rho], [rho, 1]], size=K)
    return z + np.stack([a * s, -a * s], 1), y


# -- correlation index --------------------------------------------------------
def test_hand_example():
    assert correlation_index(np.array([[1.0, 1.0], [2.0, 3.0], [3.0, 2.0]])) == pytest.approx(0.5, abs=1e-12)


def test_proportional_and_anticorrelated_columns():
    h = np.array([0.1, 0.5, -2.0, 3.0, 0.7])
    assert correlation_index(np.stack([h, 2 * h], 1)) == pytest.approx(1.0, abs=1e-12)
    assert correlation_index(np.stack([h, -h], 1)) == pytest.approx(1.0, abs=1e-12)


def test_matches_corrcoef(rng):
    x = rng.standard_normal((50, 5)) @ rng.standard_normal((5, 5))
    assert correlation_index(x) == pytest.approx(corrcoef_index(x), abs=1e-12)


def test_independent_columns_are_near_zero(rng):
    assert correlation_index(rng.standard_normal((4096, 6))) < 0.1


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_affine_invariance(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((30, 4)) @ rng.standard_normal((4, 4))
    a = rng.uniform(0.1, 10, size=4)
    b = rng.uniform(-5, 5, size=4)
    assert correlation_index(a * x + b) == pytest.approx(correlation_index(x), abs=1e-10)
    assert 0.0 <= correlation_index(x) <= 1.0 + 1e-12


def test_dead_units_are_excluded(rng):
    x = rng.standard_normal((40, 3))
    with_dead = np.column_stack([x[:, 0], np.zeros(40), x[:, 1:], np.full(40, 2.5)])
    assert correlation_index(with_dead) == pytest.approx(correlation_index(x), abs=1e-15)
    with pytest.raises(MetricError, match="live"):
        correlation_index(np.column_stack([x[:, 0], np.zeros(40)]))
    with pytest.raises(MetricError):
        correlation_index(x[:1])


def test_covariance_is_symmetric(rng):
    x = rng.standard_normal((25, 4))
    stats = correlation_stats(ActivationBatch(x, rng.integers(0, 2, 25)))
    assert np.max(np.abs(stats.cov - stats.cov.T)) <= 1e-12
    np.testing.assert_allclose(stats.cov, np.cov(x.T, bias=True), atol=1e-12)
    np.testing.assert_allclose(stats.means, x.mean(0), atol=1e-15)


# -- correlation gap ----------------------------------------------------------
def test_single_class_gap_is_zero(rng):
    x = rng.standard_normal((30, 3))
    assert correlation_gap(ActivationBatch(x, np.zeros(30, dtype=int))) == 0.0


def test_uninformative_labels(rng):
    x = rng.standard_normal((4000, 2)) @ np.array([[1.0, 0.6], [0.0, 0.8]])
    y = rng.integers(0, 2, 4000)
    assert abs(correlation_gap(ActivationBatch(x, y))) < 0.03


def test_swapped_clusters_have_negative_gap():
    x, y = swapped_clusters()
    direct = corrcoef_index(x) - sum(np.mean(y == c) * corrcoef_index(x[y == c]) for c in (0, 1))
    gap = correlation_gap(ActivationBatch(x, y))
    assert gap == pytest.approx(direct, abs=1e-12)
    # population value: overall correlation 0, within-class 0.9
    assert gap == pytest.approx(-0.9, abs=0.03)


def test_small_classes_are_skipped_with_renormalized_weights(rng):
    x = rng.standard_normal((21, 3))
    y = np.r_[np.zeros(10, dtype=int), np.ones(10, dtype=int), 2]
    expect = 0.5 * correlation_index(x[:10]) + 0.5 * correlation_index(x[10:20])
    assert class_conditional_index(ActivationBatch(x, y)) == pytest.approx(expect, abs=1e-15)
    with pytest.raises(MetricError):
        class_conditional_index(ActivationBatch(x[:3], [0, 1, 2]))


# -- accuracy -----------------------------------------------------------------
def test_constant_predictor_on_balanced_classes():
    labels = np.repeat(np.arange(10), 7)
    logits = np.zeros((70, 10))
    logits[:, 3] = 1.0
    assert accuracy(logits, labels) == pytest.approx(0.1)


def test_ties_break_to_lowest_index():
    assert accuracy(np.zeros((4, 3)), [0, 0, 1, 2]) == 0.5


def test_memorizer_scores_one(rng):
    labels = rng.integers(0, 5, 30)
    assert accuracy(np.eye(5)[labels], labels) == 1.0


def test_accuracy_errors():
    with pytest.raises(MetricError, match="empty"):
        accuracy(np.zeros((0, 3)), np.zeros(0, dtype=int))
    with pytest.raises(MetricError):
        accuracy(np.zeros((3, 3)), [0, 1])


def test_batch_validation():
    with pytest.raises(ValueError):
        ActivationBatch(np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        ActivationBatch(np.ones((3, 2)), [0, 1])
