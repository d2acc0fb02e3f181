"""
Symmetric tri-factor NMF service for hshcluster.
Single Responsibility: Minimizing ||W - H S H^T||^2 and reading clusters off the factors.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple, Union

import numpy as np

from app.core.config import settings
from app.core.errors import DegenerateError, DimensionError
from app.models.schemas import (
    ClusterValidity,
    DistanceMatrix,
    FactorizeConfig,
    FactorPair,
    UpdateRule,
    ValidityReport,
)
from app.services.kmeans_service import KMeansService, kmeans_service

logger = logging.getLogger(__name__)

MatrixLike = Union[DistanceMatrix, np.ndarray]

SEED_OFFSET = 0.01


def as_square(W: MatrixLike) -> np.ndarray:
    """Return W as a float array, checking it is square."""
    values = W.values if isinstance(W, DistanceMatrix) else np.asarray(W, dtype=float)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise DimensionError(f"Expected a square matrix, got shape {values.shape}")
    return values


class SymNmfService:
    """Service for the multiplicative-update factorization W ~ H S H^T."""

    def __init__(self, max_workers: Optional[int] = None, kmeans: Optional[KMeansService] = None):
        self.max_workers = max_workers if max_workers is not None else settings.max_workers
        self.kmeans = kmeans or kmeans_service

    def objective(self, W: MatrixLike, fp: FactorPair) -> float:
        """Squared Frobenius norm ||W - H S H^T||^2."""
        values = as_square(W)
        if fp.H.shape[0] != values.shape[0]:
            raise DimensionError(f"H has {fp.H.shape[0]} rows for a {values.shape[0]}-node W")
        return self._objective(values, fp.H, fp.S)

    @staticmethod
    def _objective(values: np.ndarray, H: np.ndarray, S: np.ndarray) -> float:
        return float(np.sum((values - H @ S @ H.T) ** 2))

    def factorize(
        self,
        W: MatrixLike,
        K: int,
        cfg: Optional[FactorizeConfig] = None,
        init: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    ) -> FactorPair:
        """
        Best-of-restarts factorization.

        Args:
            W: Symmetric nonnegative matrix (m x m)
            K: Cluster count, 2 <= K <= m
            cfg: Stopping rule, restarts and seed
            init: Optional starting (H0, S0); when given a single run starts from it

        Returns:
            FactorPair with the lowest final objective; ties go to the lowest restart index

        Raises:
            DimensionError: K out of range or non-square W
            DegenerateError: W is the zero matrix
        """
        cfg = cfg or FactorizeConfig()
        values = as_square(W)
        m = values.shape[0]
        if not 2 <= K <= m:
            raise DimensionError(f"Cluster count must lie in [2, {m}], got {K}")
        if np.any(values < 0):
            raise ValueError("Matrix entries must be nonnegative")
        if not np.any(values):
            raise DegenerateError("Cannot factorize the zero matrix")

        if init is not None:
            H0, S0 = (np.array(x, dtype=float) for x in init)
            if H0.shape != (m, K) or S0.shape != (K, K):
                raise DimensionError(f"Initial factors must be {m}x{K} and {K}x{K}")
            return self._run(values, H0, S0, cfg, restart=0)

        streams = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
        jobs = [(values, K, cfg, restart, stream) for restart, stream in enumerate(streams)]
        if self.max_workers > 1 and cfg.restarts > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                runs = list(pool.map(lambda job: self._restart(*job), jobs))
        else:
            runs = [self._restart(*job) for job in jobs]

        best = min(runs, key=lambda fp: (fp.objective, fp.restart))
        logger.info(
            f"Factorized {m}x{m} matrix, K={K}: best objective {best.objective:.6g} "
            f"(restart {best.restart}/{cfg.restarts}, {best.iterations} iterations)"
        )
        if best.degenerate_columns:
            logger.warning(f"Degenerate clusters (empty H columns): {best.degenerate_columns}")
        return best

    def _restart(
        self,
        values: np.ndarray,
        K: int,
        cfg: FactorizeConfig,
        restart: int,
        stream: np.random.SeedSequence,
    ) -> FactorPair:
        if restart == 0 and cfg.seeded_init:
            H, S = self.seeded_start(values, K, cfg)
        else:
            H, S = self.initialize(values, K, np.random.default_rng(stream))
        return self._run(values, H, S, cfg, restart)

    def seeded_start(
        self, values: np.ndarray, K: int, cfg: FactorizeConfig
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Start from K-means on the rows of W.

        H is the cluster indicator plus a small offset so every entry can still move;
        S is the least-squares core for that H, floored to stay positive.
        """
        labels = self.kmeans.lloyd_kmeans(values, K, restarts=cfg.restarts, seed=cfg.seed)
        H = np.full((values.shape[0], K), SEED_OFFSET)
        H[np.arange(labels.size), labels] += 1.0
        H_pinv = np.linalg.pinv(H)
        S = H_pinv @ values @ H_pinv.T
        S = np.maximum((S + S.T) / 2, SEED_OFFSET * float(values.mean()))
        return H, S

    @staticmethod
    def initialize(
        values: np.ndarray, K: int, rng: np.random.Generator
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Uniform (0, 1] entries; H scaled by (mean(W)/K)^(1/2), symmetric S by mean(W)."""
        m = values.shape[0]
        mean = float(values.mean())
        H = (1.0 - rng.random((m, K))) * np.sqrt(mean / K)
        S = (1.0 - rng.random((K, K))) * mean
        return H, (S + S.T) / 2

    def _run(
        self,
        values: np.ndarray,
        H: np.ndarray,
        S: np.ndarray,
        cfg: FactorizeConfig,
        restart: int,
    ) -> FactorPair:
        current = self._objective(values, H, S)
        trace: List[float] = [current]
        iterations = 0

        for _ in range(cfg.max_iters):
            if current == 0:
                break
            step = self._descent_step(values, H, S, current, cfg)
            if step is None:
                logger.debug(f"Restart {restart}: no decreasing step, stopping")
                break
            H, S, candidate = step
            iterations += 1
            trace.append(candidate)
            improvement = (current - candidate) / current
            current = candidate
            if improvement < cfg.rel_tol:
                break

        return FactorPair(
            H=H, S=S, objective=current, trace=trace, restart=restart, iterations=iterations
        )

    def _descent_step(
        self,
        values: np.ndarray,
        H: np.ndarray,
        S: np.ndarray,
        current: float,
        cfg: FactorizeConfig,
    ) -> Optional[Tuple[np.ndarray, np.ndarray, float]]:
        # p = 1/2 is the square-root rule; halve it until the objective does not increase
        power = 0.5
        for _ in range(cfg.step_halvings + 1):
            H_new, S_new = self.update(values, H, S, cfg, power)
            candidate = self._objective(values, H_new, S_new)
            if candidate <= current:
                return H_new, S_new, candidate
            power /= 2
        return None

    @staticmethod
    def update(
        values: np.ndarray,
        H: np.ndarray,
        S: np.ndarray,
        cfg: FactorizeConfig,
        power: float = 0.5,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        One multiplicative iteration (H first, then S with the new H).

        H <- H * ((W H S) / max(D_H, eps))^power with D_H = H H^T W H S for update_rule "paper",
             H S H^T H S for "standard"
        S <- S * ((H^T W H) / max(H^T H S H^T H, eps))^power
        """
        eps = cfg.epsilon_guard
        WHS = values @ H @ S
        if cfg.update_rule == UpdateRule.PAPER:
            denominator = H @ (H.T @ WHS)
        else:
            denominator = H @ (S @ (H.T @ H) @ S)
        H = H * (WHS / np.maximum(denominator, eps)) ** power

        HtH = H.T @ H
        numerator = H.T @ values @ H
        S = S * (numerator / np.maximum(HtH @ S @ HtH, eps)) ** power
        return H, (S + S.T) / 2

    def assign_labels(self, H: np.ndarray) -> np.ndarray:
        """argmax per row, ties to the lowest column; all-zero rows get label 0."""
        H = np.asarray(H, dtype=float)
        zero_rows = self.zero_row_count(H)
        if zero_rows:
            logger.warning(f"{zero_rows} all-zero rows in H labeled 0")
        return np.argmax(H, axis=1).astype(int)

    @staticmethod
    def zero_row_count(H: np.ndarray) -> int:
        return int(np.sum(~np.any(np.asarray(H) != 0, axis=1)))

    def validity_gaps(self, S: np.ndarray) -> ValidityReport:
        """Gap between each diagonal entry of S and the largest off-diagonal in its row."""
        S = np.asarray(S, dtype=float)
        clusters = []
        for i in range(S.shape[0]):
            off_diagonal = np.delete(S[i], i)
            max_off = float(off_diagonal.max()) if off_diagonal.size else 0.0
            gap = float(S[i, i]) - max_off
            clusters.append(
                ClusterValidity(
                    cluster=i,
                    diagonal=float(S[i, i]),
                    max_off_diagonal=max_off,
                    gap=gap,
                    separated=gap > 0,
                )
            )
        return ValidityReport(clusters=clusters)


# Global factorization service instance
symnmf_service = SymNmfService()


def get_symnmf_service() -> SymNmfService:
    """Get the global factorization service instance."""
    return symnmf_service
