"""
Spectral service for hshcluster.
Single Responsibility: Eigendecomposition, the signed embedding and block
approximation errors.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from app.core.config import settings
from app.core.errors import ConvergenceError, DimensionError
from app.models.schemas import DistanceMatrix, NystromErrorReport, SignedEmbedding, frozen_array

logger = logging.getLogger(__name__)


class SpectralService:
    """Eigen-structure of symmetric (generally indefinite) distance matrices."""

    def __init__(self, eig_tol: Optional[float] = None, rank_tol: Optional[float] = None):
        self.eig_tol = eig_tol if eig_tol is not None else settings.eig_tol
        self.rank_tol = rank_tol if rank_tol is not None else settings.rank_tol

    def default_rank(self, eigenvalues: np.ndarray) -> int:
        """Number of eigenvalues with |lambda| > rank_tol * |lambda_max| (at least one)."""
        magnitudes = np.abs(eigenvalues)
        top = magnitudes.max() if magnitudes.size else 0.0
        if top == 0:
            return 1
        return max(1, int(np.sum(magnitudes > self.rank_tol * top)))

    def eigendecompose(self, W: DistanceMatrix, r: Optional[int] = None) -> SignedEmbedding:
        """
        Top-r eigenpairs by |lambda| as a signed embedding.

        coords[:, k] = z_k * |lambda_k|^(1/2), signature[k] = sign(lambda_k) with
        sign(0) = +1. Each eigenvector is oriented so its largest-magnitude entry
        is positive.

        Raises:
            ValueError: r outside [1, n]
            ConvergenceError: residual ||Wz - lambda z|| / ||W|| above eig_tol
        """
        values = W.values
        if r is not None and not 1 <= r <= W.n:
            raise ValueError(f"Rank budget must lie in [1, {W.n}], got {r}")

        eigenvalues, vectors = linalg.eigh(values)
        order = np.lexsort((-eigenvalues, -np.abs(eigenvalues)))
        eigenvalues, vectors = eigenvalues[order], vectors[:, order]
        if r is None:
            r = self.default_rank(eigenvalues)
        eigenvalues, vectors = eigenvalues[:r], vectors[:, :r]

        self._check_residual(values, eigenvalues, vectors)

        pivots = np.argmax(np.abs(vectors), axis=0)
        flips = np.where(vectors[pivots, np.arange(r)] < 0, -1.0, 1.0)
        vectors = vectors * flips

        signature = np.where(eigenvalues >= 0, 1.0, -1.0)
        coords = vectors * np.sqrt(np.abs(eigenvalues))
        return SignedEmbedding(
            coords=frozen_array(coords),
            signature=frozen_array(signature),
            eigenvalues=frozen_array(eigenvalues),
            vectors=frozen_array(vectors),
        )

    def _check_residual(self, values: np.ndarray, eigenvalues: np.ndarray, vectors: np.ndarray):
        scale = np.linalg.norm(values)
        if scale == 0:
            return
        residual = np.linalg.norm(values @ vectors - vectors * eigenvalues, axis=0).max() / scale
        if residual > self.eig_tol:
            logger.error(f"Eigensolver residual {residual:.3e} above {self.eig_tol:.1e}")
            raise ConvergenceError(f"Eigensolver residual {residual:.3e} above tolerance")

    def reconstruction_error(self, W: DistanceMatrix, r: int) -> float:
        """Relative Frobenius error of the rank-r signed reconstruction."""
        embedding = self.eigendecompose(W, r)
        scale = np.linalg.norm(W.values)
        error = np.linalg.norm(W.values - embedding.reconstruct())
        return float(error / scale) if scale else float(error)

    def spectrum_table(self, W: DistanceMatrix) -> List[Tuple[int, float, int]]:
        """Rows of (rank index, eigenvalue, signature) over the full spectrum."""
        embedding = self.eigendecompose(W, W.n)
        return [
            (k, float(lam), int(sig))
            for k, (lam, sig) in enumerate(zip(embedding.eigenvalues, embedding.signature))
        ]

    def nystrom_error(
        self,
        W: DistanceMatrix,
        H: np.ndarray,
        S: np.ndarray,
        landmark_indices: Sequence[int],
    ) -> NystromErrorReport:
        """
        Block errors of perm(W) ~ H_hat S H_hat^T with landmarks first.

        total = landmark_error + 2 * cross_error + target_error whenever S is
        symmetric.
        """
        H = np.asarray(H, dtype=float)
        S = np.asarray(S, dtype=float)
        if H.ndim != 2 or H.shape[0] != W.n:
            raise DimensionError(f"H must have {W.n} rows, got shape {H.shape}")
        k = H.shape[1]
        if S.shape != (k, k):
            raise DimensionError(f"S must be {k}x{k}, got {S.shape}")

        landmarks = [int(i) for i in landmark_indices]
        if len(set(landmarks)) != len(landmarks) or any(i < 0 or i >= W.n for i in landmarks):
            raise IndexError(f"Invalid landmark indices: {landmarks}")
        chosen = set(landmarks)
        targets = [i for i in range(W.n) if i not in chosen]
        order = landmarks + targets

        H_L, H_D = H[landmarks], H[targets]
        W_LL = W.values[np.ix_(landmarks, landmarks)]
        W_DL = W.values[np.ix_(targets, landmarks)]
        W_HH = W.values[np.ix_(targets, targets)]

        landmark_error = float(np.sum((W_LL - H_L @ S @ H_L.T) ** 2))
        cross_error = float(np.sum((W_DL - H_D @ S @ H_L.T) ** 2))
        target_error = float(np.sum((W_HH - H_D @ S @ H_D.T) ** 2))

        H_hat = H[order]
        total = float(np.sum((W.values[np.ix_(order, order)] - H_hat @ S @ H_hat.T) ** 2))
        return NystromErrorReport(
            landmark_error=landmark_error,
            cross_error=cross_error,
            target_error=target_error,
            total=total,
        )


# Global spectral service instance
spectral_service = SpectralService()


def get_spectral_service() -> SpectralService:
    """Get the global spectral service instance."""
    return spectral_service
