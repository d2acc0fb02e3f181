"""
K-means service for hshcluster.
Single Responsibility: Lloyd's K-means with k-means++ seeding on coordinate rows.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from app.core.config import settings

logger = logging.getLogger(__name__)


class KMeansService:
    """Best-of-restarts Lloyd K-means used by the baselines and the seeded factorization."""

    def lloyd_kmeans(
        self,
        points: np.ndarray,
        K: int,
        restarts: int = 20,
        seed: int = 0,
        max_iters: Optional[int] = None,
    ) -> np.ndarray:
        """
        Best-of-restarts Lloyd K-means with k-means++ seeding.

        Args:
            points: n x d coordinates (a 1-D array is read as n x 1)
            K: Cluster count, 1 <= K <= n
            restarts: Independent k-means++ starts
            seed: Root seed; restart r uses the r-th spawned stream
            max_iters: Lloyd iterations per start (settings.kmeans_max_iters when None)

        Returns:
            Labels of the start with the lowest inertia; ties go to the lowest restart
        """
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        n = points.shape[0]
        if not 1 <= K <= n:
            raise ValueError(f"Cluster count must lie in [1, {n}], got {K}")
        max_iters = max_iters or settings.kmeans_max_iters

        streams = np.random.SeedSequence(seed).spawn(max(restarts, 1))
        runs: List[Tuple[float, int, np.ndarray]] = []
        for restart, stream in enumerate(streams):
            labels, inertia = self._lloyd_run(points, K, np.random.default_rng(stream), max_iters)
            runs.append((inertia, restart, labels))
        inertia, restart, labels = min(runs, key=lambda run: (run[0], run[1]))
        logger.debug(f"K-means K={K}: best inertia {inertia:.6g} from restart {restart}")
        return labels

    @staticmethod
    def kmeans_plusplus(points: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
        n = points.shape[0]
        centers = np.empty((K, points.shape[1]))
        centers[0] = points[rng.integers(n)]
        for i in range(1, K):
            dist_sq = cdist(points, centers[:i], "sqeuclidean").min(axis=1)
            total = dist_sq.sum()
            index = rng.choice(n, p=dist_sq / total) if total > 0 else rng.integers(n)
            centers[i] = points[index]
        return centers

    def _lloyd_run(
        self, points: np.ndarray, K: int, rng: np.random.Generator, max_iters: int
    ) -> Tuple[np.ndarray, float]:
        n = points.shape[0]
        centers = self.kmeans_plusplus(points, K, rng)
        labels = np.full(n, -1)
        for _ in range(max_iters):
            dist_sq = cdist(points, centers, "sqeuclidean")
            new_labels = self._fill_empty(np.argmin(dist_sq, axis=1), dist_sq, K)
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
            centers = np.vstack([points[labels == k].mean(axis=0) for k in range(K)])
        inertia = float(np.sum((points - centers[labels]) ** 2))
        return labels.astype(int), inertia

    @staticmethod
    def _fill_empty(labels: np.ndarray, dist_sq: np.ndarray, K: int) -> np.ndarray:
        # an empty cluster takes the worst-served point of a cluster that can spare one
        counts = np.bincount(labels, minlength=K)
        served = dist_sq[np.arange(labels.size), labels]
        for k in np.flatnonzero(counts == 0):
            donors = counts[labels] > 1
            far = int(np.flatnonzero(donors)[np.argmax(served[donors])])
            counts[labels[far]] -= 1
            labels[far] = k
            counts[k] = 1
            served[far] = 0.0
        return labels


# Global K-means service instance
kmeans_service = KMeansService()


def get_kmeans_service() -> KMeansService:
    """Get the global K-means service instance."""
    return kmeans_service
