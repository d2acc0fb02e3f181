"""
Unit tests for the HshService.
"""

import numpy as np
import pytest
from scipy import linalg

from app.core.errors import DimensionError, SingularError
from app.models.schemas import DistanceMatrix, FactorizeConfig, Method, Preset
from app.services.baseline_service import BaselineService
from app.services.hsh_service import HshService
from app.services.kernel_kmeans_service import labels_match
from app.services.matrix_service import MatrixService
from app.services.metrics_service import MetricsService
from app.services.spectral_service import SpectralService
from app.services.symnmf_service import SymNmfService


@pytest.fixture
def symnmf():
    return SymNmfService(max_workers=1)


@pytest.fixture
def hsh_service(symnmf):
    """Fixture for an HshService with a serial factorizer."""
    return HshService(symnmf=symnmf)


@pytest.fixture
def matrix_service():
    return MatrixService()


@pytest.fixture
def stage2_factory():
    """Factory for random nonnegative landmark factors (L=10, K=3) and a noisy distance row."""

    def make(seed: int = 0):
        rng = np.random.default_rng(seed)
        H_L = rng.uniform(0.0, 1.0, size=(10, 3))
        S = rng.uniform(0.0, 1.0, size=(3, 3))
        S = (S + S.T) / 2
        w = rng.uniform(0.0, 10.0, size=10)
        return w, S, H_L

    return make


@pytest.fixture
def stage2_instance(stage2_factory):
    """A single Stage-2 instance."""
    return stage2_factory(0)


def test_select_all_landmarks(hsh_service):
    """Tests that L = n selects every node."""
    assert hsh_service.select_landmarks(5, 5, seed=0) == [0, 1, 2, 3, 4]


def test_select_landmarks_distinct_and_sorted(hsh_service):
    """Tests L distinct in-range indices in ascending order."""
    landmarks = hsh_service.select_landmarks(1000, 30, seed=4)

    assert len(set(landmarks)) == 30
    assert landmarks == sorted(landmarks)
    assert all(0 <= i < 1000 for i in landmarks)


def test_select_landmarks_deterministic(hsh_service):
    """Tests that the seed fixes the landmark set."""
    assert hsh_service.select_landmarks(100, 10, 7) == hsh_service.select_landmarks(100, 10, 7)
    assert hsh_service.select_landmarks(100, 10, 7) != hsh_service.select_landmarks(100, 10, 8)


@pytest.mark.parametrize("L", [1, 6])
def test_select_landmarks_out_of_range(hsh_service, L):
    """Tests that L outside [2, n] is rejected."""
    with pytest.raises(ValueError):
        hsh_service.select_landmarks(5, L, seed=0)


def test_extend_target_recovers_consistent_row(hsh_service, stage2_instance):
    """Tests that a row generated by the landmark factors maps back to its factor row."""
    _, S, H_L = stage2_instance
    w = (H_L @ S @ H_L.T)[4]

    P = hsh_service.extend_target(w, S, H_L)

    assert P == pytest.approx(H_L[4], abs=1e-6)


def test_extend_target_zero_row(hsh_service, stage2_instance):
    """Tests that an all-zero distance row extends to zeros."""
    _, S, H_L = stage2_instance

    assert np.all(hsh_service.extend_target(np.zeros(10), S, H_L) == 0)


def test_extend_target_matches_least_squares(hsh_service, stage2_factory):
    """Tests the closed form against a generic least-squares solver on 50 instances."""
    for seed in range(50):
        w, S, H_L = stage2_factory(seed)
        A = S @ H_L.T

        P = hsh_service.extend_target(w, S, H_L)
        reference = linalg.lstsq(A.T, w)[0]

        assert hsh_service.residual(w, P, S, H_L) == pytest.approx(
            hsh_service.residual(w, reference, S, H_L), rel=1e-8, abs=1e-8
        )
        gradient = 2 * (P @ A - w) @ A.T
        scale = max(1.0, np.linalg.norm(w) * np.linalg.norm(A))
        assert np.linalg.norm(gradient) <= 1e-6 * scale


def test_extend_target_beats_gradient_descent(hsh_service, stage2_factory):
    """Tests that a long gradient descent run never finds a smaller residual."""
    for seed in range(50):
        w, S, H_L = stage2_factory(seed)
        A = S @ H_L.T
        step = 1.0 / (2 * np.linalg.eigvalsh(A @ A.T).max())
        P_gd = np.zeros(3)
        for _ in range(10000):
            P_gd -= step * 2 * (P_gd @ A - w) @ A.T

        P = hsh_service.extend_target(w, S, H_L)

        gd_residual = hsh_service.residual(w, P_gd, S, H_L)
        assert hsh_service.residual(w, P, S, H_L) <= gd_residual + 1e-8 * max(1.0, gd_residual)


def test_extend_target_is_local_minimum(hsh_service, stage2_factory):
    """Tests that small perturbations of the solution never lower the residual."""
    rng = np.random.default_rng(1)
    for seed in range(50):
        w, S, H_L = stage2_factory(seed)
        P = hsh_service.extend_target(w, S, H_L)
        base = hsh_service.residual(w, P, S, H_L)

        for _ in range(20):
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            perturbed = hsh_service.residual(w, P + 1e-3 * direction, S, H_L)
            assert perturbed >= base - 1e-9 * max(1.0, base)


def test_extend_target_may_be_negative(hsh_service):
    """Tests that Stage-2 rows are not clamped to nonnegative values."""
    H_L = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    S = np.eye(2)

    P = hsh_service.extend_target(np.array([1.0, 0.0, 0.0]), S, H_L)

    assert P.min() < 0


def test_extend_targets_singular(hsh_service):
    """Tests that a zero Gram matrix is reported as singular."""
    with pytest.raises(SingularError) as excinfo:
        hsh_service.extend_targets(np.ones((2, 4)), np.zeros((2, 2)), np.ones((4, 2)))

    assert excinfo.value.condition is not None


def test_extend_targets_shape_mismatch(hsh_service, stage2_instance):
    """Tests that non-conforming shapes are rejected."""
    _, S, H_L = stage2_instance

    with pytest.raises(DimensionError):
        hsh_service.extend_targets(np.ones((2, 9)), S, H_L)


def test_extend_targets_empty_batch(hsh_service, stage2_instance):
    """Tests that no targets gives an empty 0 x K result."""
    _, S, H_L = stage2_instance

    assert hsh_service.extend_targets(np.zeros((0, 10)), S, H_L).shape == (0, 3)


def test_run_hsh_without_targets_equals_stage_one(
    hsh_service, symnmf, matrix_service, random_matrix, fast_cfg
):
    """Tests that with every node a landmark, HSH is the factorization of W."""
    W = random_matrix(8, seed=3)
    obs = matrix_service.extract_observation(W, list(range(8)))

    result = hsh_service.run_hsh(obs, 2, fast_cfg)
    factors = symnmf.factorize(W, 2, fast_cfg)

    assert np.array_equal(result.labels, symnmf.assign_labels(factors.H))
    assert np.array_equal(result.landmark_factors.S, factors.S)
    assert result.target_H.shape == (0, 2)


def test_run_hsh_all_landmarks_matches_centralized(
    hsh_service, symnmf, matrix_service, random_matrix, fast_cfg
):
    """Tests equality with the centralized baseline when L = n."""
    W = random_matrix(9, seed=4)
    landmarks = hsh_service.select_landmarks(9, 9, seed=0)

    result = hsh_service.run_hsh(matrix_service.extract_observation(W, landmarks), 3, fast_cfg)
    centralized = BaselineService(symnmf=symnmf).centralized_nmf(W, 3, fast_cfg)

    assert np.array_equal(result.labels, centralized.labels)


def test_run_hsh_recovers_planted_clusters(hsh_service, matrix_service, datagen):
    """Tests recovery of planted latency clusters from a landmark subset."""
    matches = 0
    for seed in range(10):
        dataset = datagen.planted_latency(3, 10, (5.0, 30.0), (80.0, 200.0), seed=seed)
        landmarks = hsh_service.select_landmarks(30, 15, seed)
        obs = matrix_service.extract_observation(dataset.distances, landmarks)

        result = hsh_service.run_hsh(obs, 3, FactorizeConfig(restarts=5, seed=seed))

        matches += labels_match(result.labels, dataset.truth_labels)
    assert matches >= 9


def test_run_hsh_deterministic(hsh_service, matrix_service, datagen, fast_cfg):
    """Tests that the same inputs and seed reproduce the labels and objective."""
    dataset = datagen.planted_latency(3, 6, (5.0, 30.0), (80.0, 200.0), seed=2)
    obs = matrix_service.extract_observation(dataset.distances, [0, 2, 4, 6, 8, 10, 12, 14, 16])

    first = hsh_service.run_hsh(obs, 3, fast_cfg)
    second = hsh_service.run_hsh(obs, 3, fast_cfg)

    assert np.array_equal(first.labels, second.labels)
    assert first.landmark_factors.objective == second.landmark_factors.objective


def test_run_hsh_more_clusters_than_landmarks(hsh_service, matrix_service, random_matrix):
    """Tests that K > L is rejected."""
    obs = matrix_service.extract_observation(random_matrix(6), [0, 1])

    with pytest.raises(DimensionError):
        hsh_service.run_hsh(obs, 3)


def test_full_factor_and_clustering_result(hsh_service, matrix_service, datagen, fast_cfg):
    """Tests reassembly of H in node order and the shared result view."""
    dataset = datagen.planted_latency(2, 5, (1.0, 2.0), (10.0, 12.0), seed=0)
    landmarks = [1, 3, 5, 7]
    obs = matrix_service.extract_observation(dataset.distances, landmarks)

    result = hsh_service.run_hsh(obs, 2, fast_cfg)
    H = hsh_service.full_factor(result)
    view = hsh_service.clustering_result(result)

    assert H.shape == (10, 2)
    assert np.array_equal(H[landmarks], result.landmark_factors.H)
    assert np.array_equal(H[result.target_indices], result.target_H)
    assert view.method == Method.HSH
    assert view.landmark_indices == landmarks
    assert np.array_equal(view.labels, result.labels)
    assert view.objective == result.landmark_factors.objective


def test_run_hsh_node_permutation_equivariance(hsh_service, matrix_service, datagen, fast_cfg):
    """Tests that relabeling the nodes relabels the HSH output the same way."""
    dataset = datagen.planted_latency(3, 10, (5.0, 30.0), (80.0, 200.0), seed=0)
    W = dataset.distances
    landmarks = hsh_service.select_landmarks(30, 12, seed=0)
    perm = np.random.default_rng(5).permutation(30)
    moved_to = np.argsort(perm)

    base = hsh_service.run_hsh(matrix_service.extract_observation(W, landmarks), 3, fast_cfg)
    permuted_W = DistanceMatrix(values=W.values[np.ix_(perm, perm)])
    permuted_landmarks = [int(moved_to[i]) for i in landmarks]
    permuted = hsh_service.run_hsh(
        matrix_service.extract_observation(permuted_W, permuted_landmarks), 3, fast_cfg
    )

    assert np.array_equal(permuted.labels, base.labels[perm])
    assert np.array_equal(permuted.landmark_factors.H, base.landmark_factors.H)


def test_more_landmarks_lower_target_error(hsh_service, matrix_service, datagen):
    """Tests that doubling L from 20 to 40 does not hurt the hidden block or the silhouette."""
    spectral = SpectralService()
    metrics = MetricsService(resamples=100)
    errors = {20: [], 40: []}
    silhouettes = {20: [], 40: []}
    for seed in range(10):
        dataset = datagen.preset_dataset(Preset.PAPER_SYNTHETIC, seed=seed)
        W = dataset.distances
        for L in (20, 40):
            landmarks = hsh_service.select_landmarks(W.n, L, seed)
            obs = matrix_service.extract_observation(W, landmarks)

            result = hsh_service.run_hsh(obs, 4, FactorizeConfig(restarts=10, seed=seed))

            H = np.maximum(hsh_service.full_factor(result), 0.0)
            report = spectral.nystrom_error(W, H, result.landmark_factors.S, landmarks)
            errors[L].append(report.target_error)
            silhouettes[L].append(np.median(metrics.silhouette(W, result.labels)))

    assert np.median(errors[40]) <= np.median(errors[20])
    assert np.median(silhouettes[40]) >= np.median(silhouettes[20]) - 0.02
