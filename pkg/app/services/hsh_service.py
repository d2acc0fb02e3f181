"""
HSH service for hshcluster.
Single Responsibility: Landmark selection, Stage-1 factorization of the landmark
block and the closed-form Stage-2 extension of every target.
"""

import logging
from typing import List, Optional

import numpy as np
from scipy import linalg

from app.core.config import settings
from app.core.errors import DimensionError, SingularError
from app.models.schemas import (
    ClusteringResult,
    FactorizeConfig,
    HshResult,
    Method,
    PartialObservation,
    frozen_array,
)
from app.services.symnmf_service import SymNmfService, symnmf_service

logger = logging.getLogger(__name__)


class HshService:
    """Two-stage landmark clustering: W_LL ~ H_L S H_L^T, then W_DL ~ H_D S H_L^T."""

    def __init__(self, symnmf: Optional[SymNmfService] = None, ridge_scale: Optional[float] = None):
        self.symnmf = symnmf or symnmf_service
        self.ridge_scale = ridge_scale if ridge_scale is not None else settings.ridge_scale

    def select_landmarks(self, n: int, L: int, seed: int) -> List[int]:
        """L distinct indices drawn uniformly without replacement, returned sorted."""
        if not 2 <= L <= n:
            raise ValueError(f"Landmark count must lie in [2, {n}], got {L}")
        rng = np.random.default_rng(seed)
        return sorted(int(i) for i in rng.choice(n, size=L, replace=False))

    def extend_target(self, w_iL: np.ndarray, S: np.ndarray, H_L: np.ndarray) -> np.ndarray:
        """
        Closed-form minimizer of ||w_iL - P S H_L^T||^2 over the row P.

        The result is unconstrained and may hold negative entries.
        """
        w_iL = np.asarray(w_iL, dtype=float)
        if w_iL.ndim != 1:
            raise DimensionError(f"Expected a distance row, got shape {w_iL.shape}")
        return self.extend_targets(w_iL[None, :], S, H_L)[0]

    def extend_targets(self, W_DL: np.ndarray, S: np.ndarray, H_L: np.ndarray) -> np.ndarray:
        """
        Batch Stage 2: P = W_DL A^T (A A^T + delta I)^{-1} with A = S H_L^T.

        delta = ridge_scale * trace(A A^T) / K.

        Raises:
            DimensionError: shapes do not conform
            SingularError: the regularized Gram matrix is still singular
        """
        W_DL = np.asarray(W_DL, dtype=float)
        S = np.asarray(S, dtype=float)
        H_L = np.asarray(H_L, dtype=float)
        L, K = H_L.shape
        if S.shape != (K, K) or W_DL.ndim != 2 or W_DL.shape[1] != L:
            raise DimensionError(
                f"Shapes do not conform: W_DL {W_DL.shape}, S {S.shape}, H_L {H_L.shape}"
            )
        if W_DL.shape[0] == 0:
            return np.zeros((0, K))

        A = S @ H_L.T
        gram = A @ A.T
        delta = self.ridge_scale * np.trace(gram) / K
        regularized = gram + delta * np.eye(K)
        condition = float(np.linalg.cond(regularized))
        if not np.isfinite(condition) or condition * np.finfo(float).eps >= 1.0:
            logger.error(f"Stage-2 Gram matrix singular (condition {condition:.3e})")
            raise SingularError(
                f"Gram matrix singular after regularization (condition {condition:.3e})",
                condition=condition,
            )
        return linalg.solve(regularized, A @ W_DL.T, assume_a="sym").T

    @staticmethod
    def residual(w_iL: np.ndarray, P: np.ndarray, S: np.ndarray, H_L: np.ndarray) -> float:
        """||w_iL - P S H_L^T||^2 for one row or a batch of rows."""
        return float(np.sum((np.asarray(w_iL) - np.asarray(P) @ S @ np.asarray(H_L).T) ** 2))

    def run_hsh(
        self, obs: PartialObservation, K: int, cfg: Optional[FactorizeConfig] = None
    ) -> HshResult:
        """
        Full pipeline on a partial observation.

        Landmark labels come from argmax of H_L; target labels from argmax of the
        raw Stage-2 rows. Labels are returned in original node order.
        """
        cfg = cfg or FactorizeConfig()
        L = len(obs.landmark_indices)
        if K > L:
            raise DimensionError(f"Cluster count {K} exceeds landmark count {L}")

        factors = self.symnmf.factorize(obs.landmark_block, K, cfg)
        H_D = self.extend_targets(obs.target_block, factors.S, factors.H)

        labels = np.zeros(obs.n, dtype=int)
        labels[obs.landmark_indices] = self.symnmf.assign_labels(factors.H)
        if obs.target_indices:
            labels[obs.target_indices] = np.argmax(H_D, axis=1)
        stage2 = self.residual(obs.target_block, H_D, factors.S, factors.H)

        logger.info(
            f"HSH on {L} landmarks / {len(obs.target_indices)} targets, K={K}: "
            f"stage-1 objective {factors.objective:.6g}, stage-2 residual {stage2:.6g}"
        )
        return HshResult(
            landmark_factors=factors,
            target_H=frozen_array(H_D),
            labels=frozen_array(labels, dtype=int),
            validity=self.symnmf.validity_gaps(factors.S),
            landmark_indices=list(obs.landmark_indices),
            target_indices=list(obs.target_indices),
            K=K,
            L=L,
            seed=cfg.seed,
            restarts=cfg.restarts,
            stage2_residual=stage2,
        )

    def clustering_result(self, result: HshResult) -> ClusteringResult:
        """View an HshResult through the result type shared with the baselines."""
        return ClusteringResult(
            method=Method.HSH,
            labels=result.labels,
            seed=result.seed,
            restarts=result.restarts,
            validity=result.validity,
            s_matrix=result.landmark_factors.S,
            landmark_indices=result.landmark_indices,
            objective=result.landmark_factors.objective,
            degenerate_rows=self.symnmf.zero_row_count(result.landmark_factors.H),
        )

    def full_factor(self, result: HshResult) -> np.ndarray:
        """Stack H_L and H_D back into original node order (n x K)."""
        n = result.L + len(result.target_indices)
        H = np.zeros((n, result.K))
        H[result.landmark_indices] = result.landmark_factors.H
        if result.target_indices:
            H[result.target_indices] = result.target_H
        return H


# Global HSH service instance
hsh_service = HshService()


def get_hsh_service() -> HshService:
    """Get the global HSH service instance."""
    return hsh_service
