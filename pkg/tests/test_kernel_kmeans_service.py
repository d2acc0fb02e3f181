"""
Unit tests for the KernelKMeansService and partition helpers.
"""

from unittest.mock import patch

import numpy as np
import pytest

from app.core.errors import SizeError
from app.models.schemas import DistanceMatrix, FactorizeConfig
from app.services.kernel_kmeans_service import (
    KernelKMeansService,
    canonical_labels,
    labels_match,
    set_partitions,
)
from app.services.symnmf_service import SymNmfService


@pytest.fixture
def kernel_service():
    """Fixture for a KernelKMeansService with a serial factorizer."""
    return KernelKMeansService(symnmf=SymNmfService(max_workers=1))


def test_canonical_labels():
    """Tests relabeling by first occurrence."""
    assert list(canonical_labels([2, 2, 0, 1, 0])) == [0, 0, 1, 2, 1]


def test_labels_match_up_to_permutation():
    """Tests label comparison modulo cluster ids."""
    assert labels_match([1, 1, 0], [0, 0, 2])
    assert not labels_match([0, 1, 0], [0, 0, 1])
    assert not labels_match([0, 0], [0, 0, 0])


@pytest.mark.parametrize("n, K, count", [(4, 4, 1), (5, 2, 15), (6, 3, 90), (8, 2, 127)])
def test_set_partitions_count(n, K, count):
    """Tests that enumeration yields the Stirling number of the second kind."""
    partitions = set_partitions(n, K)

    assert len(partitions) == count
    assert all(len(set(row)) == K for row in partitions)
    assert all(np.array_equal(row, canonical_labels(row)) for row in partitions)


def test_set_partitions_lexicographic():
    """Tests the lexicographic order of the enumeration."""
    rows = [tuple(row) for row in set_partitions(4, 2)]

    assert rows == sorted(rows)
    assert rows[0] == (0, 0, 0, 1)


def test_objective_two_nodes(kernel_service):
    """Tests J on the two labelings of a 2-node matrix."""
    W = np.array([[0.0, 4.0], [4.0, 0.0]])

    together = kernel_service.kkm_objective(W, [0, 0])
    apart = kernel_service.kkm_objective(W, [0, 1])

    assert together.j_value == pytest.approx(-4.0)
    assert apart.j_value == pytest.approx(0.0)


def test_objective_singletons(kernel_service, random_matrix):
    """Tests that all-singleton partitions of a zero-diagonal matrix give J = 0."""
    assert kernel_service.kkm_objective(random_matrix(5), range(5)).j_value == pytest.approx(0.0)


def test_objective_relabel_invariant(kernel_service, random_matrix):
    """Tests that renaming clusters does not change J."""
    W = random_matrix(6, seed=1)

    first = kernel_service.kkm_objective(W, [0, 0, 1, 1, 2, 2])
    second = kernel_service.kkm_objective(W, [2, 2, 0, 0, 1, 1])

    assert first.j_value == pytest.approx(second.j_value, rel=1e-12)


def test_objective_reports_empty_clusters(kernel_service, random_matrix):
    """Tests that empty clusters contribute nothing and are listed."""
    result = kernel_service.kkm_objective(random_matrix(4), [0, 0, 2, 2], n_clusters=4)

    assert result.empty_clusters == [1, 3]


def test_brute_force_singletons(kernel_service, random_matrix):
    """Tests that exactly K = n clusters forces singletons."""
    oracle = kernel_service.brute_force_optimal(random_matrix(3), 3, exact=True)

    assert list(oracle) == [0, 1, 2]


def test_brute_force_searches_fewer_clusters(kernel_service):
    """Tests that a constant off-diagonal matrix is best left as a single cluster."""
    W = np.ones((4, 4)) - np.eye(4)

    oracle = kernel_service.brute_force_optimal(W, 3)

    assert list(oracle) == [0, 0, 0, 0]
    assert kernel_service.kkm_objective(W, oracle).j_value == pytest.approx(-3.0)


def test_brute_force_planted_kernel(kernel_service, datagen):
    """Tests that the oracle recovers blocks with large intra-cluster entries."""
    dataset = datagen.planted_kernel(2, 4, seed=0)

    oracle = kernel_service.brute_force_optimal(dataset.distances, 2)

    assert list(oracle) == [0, 0, 0, 0, 1, 1, 1, 1]


def test_brute_force_ties_resolve_lexicographically(kernel_service):
    """Tests that equal-J partitions into exactly K clusters return the smallest labeling."""
    W = np.ones((4, 4)) - np.eye(4)

    oracle = kernel_service.brute_force_optimal(W, 2, exact=True)

    assert list(oracle) == [0, 0, 0, 1]
    values = [kernel_service.kkm_objective(W, row).j_value for row in set_partitions(4, 2)]
    assert max(values) - min(values) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("n", range(2, 9))
@pytest.mark.parametrize("K", [1, 2, 3])
def test_brute_force_beats_random_labelings(kernel_service, random_matrix, n, K):
    """Tests that no random labeling with at most K clusters has a lower J than the oracle."""
    if K > n:
        pytest.skip("more clusters than nodes")
    rng = np.random.default_rng(10 * n + K)
    W = random_matrix(n, seed=n)

    best = kernel_service.kkm_objective(W, kernel_service.brute_force_optimal(W, K)).j_value

    for _ in range(100):
        labels = rng.integers(K, size=n)
        assert best <= kernel_service.kkm_objective(W, labels, K).j_value + 1e-9


def test_brute_force_exact_never_beats_fewer_clusters(kernel_service, random_matrix):
    """Tests that restricting the search to exactly K clusters cannot lower J."""
    W = random_matrix(7, seed=5)

    free = kernel_service.brute_force_optimal(W, 3)
    exact = kernel_service.brute_force_optimal(W, 3, exact=True)

    assert len(set(exact)) == 3
    assert (
        kernel_service.kkm_objective(W, free).j_value
        <= kernel_service.kkm_objective(W, exact).j_value + 1e-9
    )


@pytest.mark.parametrize("scale", [0.5, 3.0])
def test_brute_force_scale_invariant(kernel_service, random_matrix, scale):
    """Tests that positive scaling of W does not change the optimal partition."""
    W = random_matrix(7, seed=11).values

    assert np.array_equal(
        kernel_service.brute_force_optimal(W, 3), kernel_service.brute_force_optimal(scale * W, 3)
    )


def test_brute_force_size_limit(kernel_service, random_matrix):
    """Tests that more than the configured node limit is refused."""
    with pytest.raises(SizeError):
        kernel_service.brute_force_optimal(random_matrix(13), 2)


def test_brute_force_size_limit_from_settings(kernel_service, random_matrix):
    """Tests that the node limit is read from settings."""
    with patch("app.services.kernel_kmeans_service.settings") as mock_settings:
        mock_settings.brute_force_max_nodes = 3

        with pytest.raises(SizeError):
            kernel_service.brute_force_optimal(random_matrix(4), 2)


def test_equivalence_two_nodes(kernel_service):
    """Tests the harness on the smallest instance."""
    W = DistanceMatrix(values=[[0.0, 3.0], [3.0, 0.0]])

    report = kernel_service.equivalence_check(W, 2, FactorizeConfig(restarts=10))

    assert report.match
    assert list(report.oracle_labels) == [0, 1]
    assert report.j_gap == pytest.approx(0.0)


def test_equivalence_two_nodes_up_to_k(kernel_service):
    """Tests that the free-count oracle merges two nodes the factorization keeps apart."""
    W = DistanceMatrix(values=[[0.0, 3.0], [3.0, 0.0]])

    report = kernel_service.equivalence_check(W, 2, FactorizeConfig(restarts=10), exact=False)

    assert not report.match
    assert list(report.oracle_labels) == [0, 0]
    assert report.nmf_labels[0] != report.nmf_labels[1]
    assert report.j_gap == pytest.approx(3.0)


def test_equivalence_planted_kernel_instances(kernel_service, datagen):
    """Tests factorization against the exhaustive optimum on 50 planted kernel instances."""
    matches = 0
    for seed in range(50):
        dataset = datagen.planted_kernel(3, 3, seed=seed)
        cfg = FactorizeConfig(restarts=20, seed=seed)

        report = kernel_service.equivalence_check(dataset.distances, 3, cfg)

        assert labels_match(report.oracle_labels, dataset.truth_labels)
        free = kernel_service.brute_force_optimal(dataset.distances, 3)
        assert labels_match(free, dataset.truth_labels)
        if report.match:
            assert report.j_gap == pytest.approx(0.0, abs=1e-6)
        matches += report.match
    assert matches >= 48


def test_equivalence_report_fields_on_overlapping_data(kernel_service, random_matrix):
    """Tests that a mismatch is reported, not raised."""
    W = random_matrix(6, seed=2)
    report = kernel_service.equivalence_check(W, 2, FactorizeConfig(restarts=3))

    assert report.nmf_labels.shape == (6,)
    assert report.oracle_labels.shape == (6,)
    assert np.isfinite(report.j_gap)
