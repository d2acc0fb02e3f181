"""
Unit tests for the MetricsService.
"""

from unittest.mock import patch

import numpy as np
import pytest
from sklearn.metrics import silhouette_samples

from app.models.schemas import SilhouetteVariant
from app.services.metrics_service import MetricsService


@pytest.fixture
def metrics_service():
    """Fixture for a MetricsService with a reduced bootstrap."""
    return MetricsService(resamples=200)


def naive_metrics(D, labels):
    """Double-loop pooled silhouette and gain ratio."""
    n = len(labels)
    s, g = np.zeros(n), np.zeros(n)
    for i in range(n):
        own = [D[i, j] for j in range(n) if labels[j] == labels[i] and j != i]
        other = [D[i, j] for j in range(n) if labels[j] != labels[i]]
        a = np.mean(own) if own else 0.0
        b = np.mean(other)
        s[i] = (b - a) / max(a, b) if max(a, b) > 0 else 0.0
        g[i] = b / a if a > 0 else np.inf
    return s, g


def surjective_labels(rng, n, K):
    labels = rng.integers(K, size=n)
    labels[:K] = rng.permutation(K)
    return labels


def test_two_singletons(metrics_service):
    """Tests singleton clusters: silhouette 1 and an infinite gain ratio."""
    D = np.array([[0.0, 5.0], [5.0, 0.0]])

    assert list(metrics_service.silhouette(D, [0, 1])) == [1.0, 1.0]
    assert np.all(np.isinf(metrics_service.gain_ratio(D, [0, 1])))


def test_equal_distances(metrics_service):
    """Tests that a split of equidistant nodes has silhouette 0 and gain 1."""
    D = 3.0 * (np.ones((4, 4)) - np.eye(4))

    assert metrics_service.silhouette(D, [0, 0, 1, 1]) == pytest.approx(np.zeros(4))
    assert metrics_service.gain_ratio(D, [0, 0, 1, 1]) == pytest.approx(np.ones(4))


def test_block_example(metrics_service, block_matrix):
    """Tests s = 0.9 and g = 10 for distance 1 inside and 10 across."""
    labels = [0, 0, 1, 1]

    assert metrics_service.silhouette(block_matrix, labels) == pytest.approx([0.9] * 4)
    assert metrics_service.gain_ratio(block_matrix, labels) == pytest.approx([10.0] * 4)


@pytest.mark.parametrize("seed", range(50))
def test_matches_double_loop_reference(metrics_service, random_matrix, seed):
    """Tests the vectorized metrics against the definition."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 61))
    K = int(rng.integers(2, 6))
    D = random_matrix(n, seed=seed).values
    labels = surjective_labels(rng, n, K)

    s_ref, g_ref = naive_metrics(D, labels)

    np.testing.assert_allclose(metrics_service.silhouette(D, labels), s_ref, rtol=0, atol=1e-12)
    np.testing.assert_allclose(metrics_service.gain_ratio(D, labels), g_ref, rtol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_nearest_variant_matches_sklearn(metrics_service, random_matrix, seed):
    """Tests the nearest-cluster variant against sklearn on labelings without singletons."""
    rng = np.random.default_rng(seed)
    D = random_matrix(20, seed=seed).values
    labels = np.repeat(np.arange(4), 5)[rng.permutation(20)]

    ours = metrics_service.silhouette(D, labels, SilhouetteVariant.NEAREST)

    reference = silhouette_samples(D, labels, metric="precomputed")
    np.testing.assert_allclose(ours, reference, atol=1e-10)


def test_variants_differ_with_three_clusters(metrics_service):
    """Tests that the nearest variant uses the closest other cluster only."""
    D = np.array(
        [
            [0.0, 1.0, 4.0, 4.0, 20.0, 20.0],
            [1.0, 0.0, 4.0, 4.0, 20.0, 20.0],
            [4.0, 4.0, 0.0, 1.0, 20.0, 20.0],
            [4.0, 4.0, 1.0, 0.0, 20.0, 20.0],
            [20.0, 20.0, 20.0, 20.0, 0.0, 1.0],
            [20.0, 20.0, 20.0, 20.0, 1.0, 0.0],
        ]
    )
    labels = [0, 0, 1, 1, 2, 2]

    pooled = metrics_service.gain_ratio(D, labels)
    nearest = metrics_service.gain_ratio(D, labels, SilhouetteVariant.NEAREST)

    assert pooled[0] == pytest.approx(12.0)
    assert nearest[0] == pytest.approx(4.0)


def test_scale_invariance(metrics_service, random_matrix):
    """Tests that scaling D leaves silhouette and gain unchanged."""
    D = random_matrix(12, seed=1).values
    labels = [0, 1, 2] * 4

    assert metrics_service.silhouette(3 * D, labels) == pytest.approx(
        metrics_service.silhouette(D, labels), rel=1e-12
    )
    assert metrics_service.gain_ratio(3 * D, labels) == pytest.approx(
        metrics_service.gain_ratio(D, labels), rel=1e-12
    )


def test_permutation_equivariance(metrics_service, random_matrix):
    """Tests that permuting nodes permutes the per-node metrics."""
    D = random_matrix(10, seed=2).values
    labels = np.array([0, 0, 1, 1, 1, 2, 2, 0, 1, 2])
    perm = np.random.default_rng(2).permutation(10)

    base = metrics_service.silhouette(D, labels)
    permuted = metrics_service.silhouette(D[np.ix_(perm, perm)], labels[perm])

    assert permuted == pytest.approx(base[perm], rel=1e-12)


def test_single_cluster_rejected(metrics_service, block_matrix):
    """Tests that fewer than two clusters is an error."""
    with pytest.raises(ValueError):
        metrics_service.silhouette(block_matrix, [0, 0, 0, 0])


def test_label_length_mismatch(metrics_service, block_matrix):
    """Tests that the label vector must cover every node."""
    with pytest.raises(ValueError):
        metrics_service.silhouette(block_matrix, [0, 1])


def test_summarize_median(metrics_service):
    """Tests the median of a small sample."""
    assert metrics_service.summarize([3.0, 1.0, 2.0]).median == 2.0


def test_summarize_constant_interval(metrics_service):
    """Tests that a constant sample has a zero-width interval."""
    summary = metrics_service.summarize([4.0] * 20)

    assert summary.confidence_interval == (4.0, 4.0)


def test_summarize_even_sample(metrics_service):
    """Tests the median of 100 draws and the sorted CDF samples."""
    values = np.random.default_rng(5).uniform(size=100)

    summary = metrics_service.summarize(values)

    ordered = np.sort(values)
    assert summary.median == pytest.approx((ordered[49] + ordered[50]) / 2)
    assert np.array_equal(summary.cdf_samples, ordered)
    low, high = summary.confidence_interval
    assert low <= high


def test_summarize_deterministic(metrics_service):
    """Tests that the bootstrap interval is fixed by the seed."""
    values = np.random.default_rng(6).normal(size=50)

    assert (
        metrics_service.summarize(values, seed=3).confidence_interval
        == metrics_service.summarize(values, seed=3).confidence_interval
    )


@pytest.mark.parametrize("values", [[], [1.0, np.inf], [np.nan]])
def test_summarize_rejects_bad_input(metrics_service, values):
    """Tests that empty and non-finite vectors are refused."""
    with pytest.raises(ValueError):
        metrics_service.summarize(values)


@patch("app.services.metrics_service.settings")
def test_bootstrap_settings(mock_settings):
    """Tests that resamples and confidence default to the configured values."""
    # Arrange
    mock_settings.bootstrap_resamples = 50
    mock_settings.confidence = 0.9
    # Act
    service = MetricsService()
    # Assert
    assert service.resamples == 50
    assert service.confidence == 0.9


def test_quality_report_excludes_singletons(metrics_service, caplog):
    """Tests that singleton gains are kept per node but left out of summaries."""
    # Arrange
    D = np.array(
        [
            [0.0, 1.0, 10.0],
            [1.0, 0.0, 10.0],
            [10.0, 10.0, 0.0],
        ]
    )
    # Act
    report = metrics_service.quality_report(D, [0, 0, 1])
    # Assert
    assert report.excluded_gain == 1
    assert np.isinf(report.gain_ratio[2])
    assert report.median_gain == pytest.approx(10.0)
    assert report.gain_cdf.size == 2
    assert report.per_cluster_gain == {0: pytest.approx(10.0)}
    assert "1 singleton" in caplog.text


def test_quality_report_all_singletons(metrics_service):
    """Tests that an all-singleton labeling has no gain summary."""
    with pytest.raises(ValueError):
        metrics_service.quality_report(np.array([[0.0, 2.0], [2.0, 0.0]]), [0, 1])


def test_quality_report_per_cluster(metrics_service, block_matrix):
    """Tests the per-cluster medians on the block example."""
    report = metrics_service.quality_report(block_matrix, [0, 0, 1, 1])

    assert report.median_silhouette == pytest.approx(0.9)
    assert report.per_cluster_silhouette == {0: pytest.approx(0.9), 1: pytest.approx(0.9)}


def test_cdf_rows():
    """Tests ascending (value, fraction) rows with infinities dropped."""
    rows = MetricsService.cdf_rows([3.0, 1.0, np.inf, 2.0])

    assert rows == [(1.0, pytest.approx(1 / 3)), (2.0, pytest.approx(2 / 3)), (3.0, 1.0)]
