"""
Baseline service for hshcluster.
Single Responsibility: The comparison methods (centralized factorization, SVD
embedding with K-means, Vivaldi coordinates with K-means, K-means on points).
"""

import logging
from typing import List, Optional, Union

import numpy as np

from app.core.config import settings
from app.models.schemas import (
    ClusteringResult,
    CoordinateEmbedding,
    DistanceMatrix,
    FactorizeConfig,
    Method,
    PartialObservation,
    frozen_array,
)
from app.services.kmeans_service import KMeansService, kmeans_service
from app.services.spectral_service import SpectralService, spectral_service
from app.services.symnmf_service import SymNmfService, symnmf_service

logger = logging.getLogger(__name__)

Measurements = Union[DistanceMatrix, PartialObservation]


class BaselineService:
    """Comparison clusterings that share the ClusteringResult type with HSH."""

    def __init__(
        self,
        symnmf: Optional[SymNmfService] = None,
        spectral: Optional[SpectralService] = None,
        kmeans: Optional[KMeansService] = None,
    ):
        self.symnmf = symnmf or symnmf_service
        self.spectral = spectral or spectral_service
        self.kmeans = kmeans or kmeans_service

    def centralized_nmf(
        self, W: DistanceMatrix, K: int, cfg: Optional[FactorizeConfig] = None
    ) -> ClusteringResult:
        """Factorize the full matrix and label nodes by argmax of H."""
        cfg = cfg or FactorizeConfig()
        factors = self.symnmf.factorize(W, K, cfg)
        return ClusteringResult(
            method=Method.CENTRALIZED,
            labels=frozen_array(self.symnmf.assign_labels(factors.H), dtype=int),
            seed=cfg.seed,
            restarts=cfg.restarts,
            validity=self.symnmf.validity_gaps(factors.S),
            s_matrix=factors.S,
            objective=factors.objective,
            degenerate_rows=self.symnmf.zero_row_count(factors.H),
        )

    def svd_kmeans(
        self,
        W: DistanceMatrix,
        r: Optional[int],
        K: int,
        cfg: Optional[FactorizeConfig] = None,
    ) -> ClusteringResult:
        """K-means on the top-r eigen-coordinates Z |lambda|^(1/2), signature ignored."""
        cfg = cfg or FactorizeConfig()
        embedding = self.spectral.eigendecompose(W, r)
        labels = self.kmeans.lloyd_kmeans(embedding.coords, K, restarts=cfg.restarts, seed=cfg.seed)
        logger.info(f"SVD baseline: rank {embedding.rank}, K={K}")
        return ClusteringResult(
            method=Method.SVD,
            labels=frozen_array(labels, dtype=int),
            seed=cfg.seed,
            restarts=cfg.restarts,
        )

    def vivaldi_embed(
        self,
        source: Measurements,
        d: Optional[int] = None,
        iters: Optional[int] = None,
        seed: int = 0,
        cc: Optional[float] = None,
        ce: Optional[float] = None,
    ) -> CoordinateEmbedding:
        """
        Centralized simulation of basic Euclidean Vivaldi.

        Each round every node, in index order, samples one measured neighbor
        uniformly and moves along the spring force by cc * w * (rtt - dist),
        with w = e_i / (e_i + e_j). Local errors start at 1 and follow
        e_i <- es * ce * w + e_i * (1 - ce * w).

        Args:
            source: Full matrix, or a partial observation whose landmark-landmark
                and target-landmark links are the only measurements
            d: Coordinate dimension
            iters: Rounds over all nodes
            seed: RNG seed

        Returns:
            CoordinateEmbedding with the relative stress over measured pairs
        """
        d = d or settings.vivaldi_dimension
        iters = iters or settings.vivaldi_iters
        cc = cc if cc is not None else settings.vivaldi_cc
        ce = ce if ce is not None else settings.vivaldi_ce
        if d < 1 or iters < 1:
            raise ValueError(f"Dimension and iterations must be >= 1, got d={d}, iters={iters}")

        measured = self._measured(source)
        n = measured.shape[0]
        neighbors = [np.flatnonzero(np.isfinite(measured[i])) for i in range(n)]
        rng = np.random.default_rng(seed)
        coords = rng.uniform(-1.0, 1.0, size=(n, d))
        errors = np.ones(n)

        for _ in range(iters):
            for i in range(n):
                if neighbors[i].size == 0:
                    continue
                j = int(rng.choice(neighbors[i]))
                self._vivaldi_step(coords, errors, i, j, measured[i, j], cc, ce, rng)

        stress = self.stress(coords, measured)
        logger.info(f"Vivaldi: {n} nodes, d={d}, {iters} rounds, stress {stress:.4g}")
        return CoordinateEmbedding(
            coords=frozen_array(coords), embedding_error=stress, method=Method.VIVALDI.value
        )

    @staticmethod
    def _measured(source: Measurements) -> np.ndarray:
        """n x n matrix of measured distances; NaN where no link exists."""
        if isinstance(source, DistanceMatrix):
            measured = np.array(source.values, dtype=float)
        else:
            measured = np.full((source.n, source.n), np.nan)
            lm, tg = source.landmark_indices, source.target_indices
            measured[np.ix_(lm, lm)] = source.landmark_block.values
            if tg:
                measured[np.ix_(tg, lm)] = source.target_block
                measured[np.ix_(lm, tg)] = source.target_block.T
        np.fill_diagonal(measured, np.nan)
        return measured

    @staticmethod
    def _vivaldi_step(
        coords: np.ndarray,
        errors: np.ndarray,
        i: int,
        j: int,
        rtt: float,
        cc: float,
        ce: float,
        rng: np.random.Generator,
    ) -> None:
        diff = coords[i] - coords[j]
        dist = float(np.linalg.norm(diff))
        total = errors[i] + errors[j]
        w = errors[i] / total if total > 0 else 0.5
        if rtt > 0:
            sample_error = abs(dist - rtt) / rtt
        else:
            sample_error = 0.0 if dist == 0 else 1.0
        errors[i] = sample_error * ce * w + errors[i] * (1 - ce * w)

        if dist > 0:
            direction = diff / dist
        else:
            # coincident nodes are pushed apart along a random direction
            direction = rng.normal(size=coords.shape[1])
            direction /= np.linalg.norm(direction)
        coords[i] += cc * w * (rtt - dist) * direction

    @staticmethod
    def stress(coords: np.ndarray, measured: np.ndarray) -> float:
        """sum (||x_i - x_j|| - D_ij)^2 / sum D_ij^2 over measured pairs i < j."""
        rows, cols = np.nonzero(np.triu(np.isfinite(measured), k=1))
        target = measured[rows, cols]
        fitted = np.linalg.norm(coords[rows] - coords[cols], axis=1)
        numerator = float(np.sum((fitted - target) ** 2))
        denominator = float(np.sum(target**2))
        return numerator / denominator if denominator > 0 else numerator

    def vivaldi_kmeans(
        self,
        source: Measurements,
        K: int,
        d: Optional[int] = None,
        iters: Optional[int] = None,
        seed: int = 0,
        restarts: Optional[int] = None,
    ) -> ClusteringResult:
        """K-means on Vivaldi coordinates."""
        restarts = restarts or settings.restarts
        embedding = self.vivaldi_embed(source, d=d, iters=iters, seed=seed)
        labels = self.kmeans.lloyd_kmeans(embedding.coords, K, restarts=restarts, seed=seed)
        landmarks: Optional[List[int]] = (
            list(source.landmark_indices) if isinstance(source, PartialObservation) else None
        )
        return ClusteringResult(
            method=Method.VIVALDI,
            labels=frozen_array(labels, dtype=int),
            seed=seed,
            restarts=restarts,
            landmark_indices=landmarks,
            objective=embedding.embedding_error,
        )

    def origin_kmeans(
        self, points: np.ndarray, K: int, seed: int = 0, restarts: Optional[int] = None
    ) -> ClusteringResult:
        """Lloyd K-means directly on the generating coordinates."""
        restarts = restarts or settings.restarts
        labels = self.kmeans.lloyd_kmeans(points, K, restarts=restarts, seed=seed)
        return ClusteringResult(
            method=Method.ORIGIN,
            labels=frozen_array(labels, dtype=int),
            seed=seed,
            restarts=restarts,
        )


# Global baseline service instance
baseline_service = BaselineService()


def get_baseline_service() -> BaselineService:
    """Get the global baseline service instance."""
    return baseline_service
