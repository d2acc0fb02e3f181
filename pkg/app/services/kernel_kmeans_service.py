"""
Kernel K-means service for hshcluster.
Single Responsibility: The kernel K-means objective on W, the exhaustive
optimal-partition oracle and the factorization-equivalence harness.
"""

import logging
from typing import Iterator, Optional, Sequence

import numpy as np

from app.core.config import settings
from app.core.errors import SizeError
from app.models.schemas import EquivalenceReport, FactorizeConfig, PartitionObjective, frozen_array
from app.services.symnmf_service import MatrixLike, SymNmfService, as_square, symnmf_service

logger = logging.getLogger(__name__)

BATCH_ROWS = 65536


def canonical_labels(labels: Sequence[int]) -> np.ndarray:
    """Relabel clusters in order of first occurrence (0, 1, 2, ...)."""
    mapping = {}
    out = np.empty(len(labels), dtype=int)
    for i, label in enumerate(labels):
        out[i] = mapping.setdefault(int(label), len(mapping))
    return out


def labels_match(a: Sequence[int], b: Sequence[int]) -> bool:
    """True when two labelings are equal up to a permutation of cluster ids."""
    return len(a) == len(b) and np.array_equal(canonical_labels(a), canonical_labels(b))


def set_partitions(n: int, K: int) -> np.ndarray:
    """
    All partitions of n items into exactly K nonempty blocks.

    Rows are restricted growth strings (canonical labelings) in lexicographic order.
    """
    rows = np.zeros((1, 1), dtype=np.int8)
    highest = np.zeros(1, dtype=int)
    for position in range(1, n):
        left_after = n - position - 1
        parts, tops = [], []
        for label in range(K):
            top = np.maximum(highest, label)
            # the label must be reachable and enough items must remain to open the rest
            keep = (label <= highest + 1) & (K - 1 - top <= left_after)
            column = np.full((int(keep.sum()), 1), label, dtype=np.int8)
            parts.append(np.hstack([rows[keep], column]))
            tops.append(top[keep])
        rows = np.vstack(parts)
        highest = np.concatenate(tops)
    rows = rows[highest == K - 1]
    return rows[np.lexsort(rows.T[::-1])]


class KernelKMeansService:
    """Kernel K-means on a distance matrix used directly as the Gram matrix."""

    def __init__(self, symnmf: Optional[SymNmfService] = None):
        self.symnmf = symnmf or symnmf_service

    def kkm_objective(
        self, W: MatrixLike, labels: Sequence[int], n_clusters: Optional[int] = None
    ) -> PartitionObjective:
        """
        J = tr(W) - sum_k (1/n_k) sum_{i,j in C_k} W[i][j].

        Empty clusters contribute 0 and are listed in `empty_clusters`.
        """
        values = as_square(W)
        labels = np.asarray(labels, dtype=int)
        K = n_clusters if n_clusters is not None else int(labels.max()) + 1
        members = np.zeros((values.shape[0], K))
        members[np.arange(labels.size), labels] = 1.0

        sizes = members.sum(axis=0)
        within = np.einsum("ik,ij,jk->k", members, values, members)
        nonempty = sizes > 0
        trace_term = float(np.sum(within[nonempty] / sizes[nonempty]))
        empty = [int(k) for k in np.flatnonzero(~nonempty)]
        return PartitionObjective(
            labels=frozen_array(labels, dtype=int),
            j_value=float(np.trace(values)) - trace_term,
            trace_term=trace_term,
            empty_clusters=empty,
        )

    def brute_force_optimal(self, W: MatrixLike, K: int, exact: bool = False) -> np.ndarray:
        """
        Exhaustive kernel K-means optimum over partitions into at most K nonempty clusters.

        Args:
            W: Square matrix used as the Gram matrix
            K: Largest cluster count searched
            exact: Search only partitions with exactly K nonempty clusters

        Returns:
            Canonical labels; ties resolve to the lexicographically smallest labeling

        Raises:
            SizeError: more than `brute_force_max_nodes` nodes
        """
        values = as_square(W)
        n = values.shape[0]
        if n > settings.brute_force_max_nodes:
            raise SizeError(f"Exhaustive search limited to {settings.brute_force_max_nodes} nodes")
        if not 1 <= K <= n:
            raise ValueError(f"Cluster count must lie in [1, {n}], got {K}")

        counts = [K] if exact else range(1, K + 1)
        partitions = np.vstack([set_partitions(n, k) for k in counts])
        partitions = partitions[np.lexsort(partitions.T[::-1])]
        scores = np.concatenate(
            [self._batch_trace(values, batch, K) for batch in self._batches(partitions)]
        )
        # minimizing J is maximizing the trace term
        best = scores.max()
        tolerance = 1e-12 * max(1.0, abs(best))
        winner = int(np.flatnonzero(scores >= best - tolerance)[0])
        logger.debug(f"Enumerated {len(partitions)} partitions of {n} nodes into <= {K} blocks")
        return partitions[winner].astype(int)

    @staticmethod
    def _batches(partitions: np.ndarray) -> Iterator[np.ndarray]:
        for start in range(0, len(partitions), BATCH_ROWS):
            yield partitions[start : start + BATCH_ROWS]

    @staticmethod
    def _batch_trace(values: np.ndarray, batch: np.ndarray, K: int) -> np.ndarray:
        total = np.zeros(len(batch))
        for k in range(K):
            members = (batch == k).astype(float)
            within = np.sum((members @ values) * members, axis=1)
            sizes = members.sum(axis=1)
            total += np.divide(within, sizes, out=np.zeros_like(within), where=sizes > 0)
        return total

    def equivalence_check(
        self,
        W: MatrixLike,
        K: int,
        cfg: Optional[FactorizeConfig] = None,
        exact: bool = True,
    ) -> EquivalenceReport:
        """
        Compare factorization labels with the exhaustive kernel K-means optimum.

        The factorization always has K columns, so the oracle searches exactly K
        clusters unless `exact` is False.
        """
        cfg = cfg or FactorizeConfig()
        values = as_square(W)
        if values.shape[0] > settings.brute_force_max_nodes:
            raise SizeError(f"Exhaustive search limited to {settings.brute_force_max_nodes} nodes")

        factors = self.symnmf.factorize(values, K, cfg)
        nmf_labels = self.symnmf.assign_labels(factors.H)
        oracle_labels = self.brute_force_optimal(values, K, exact=exact)
        nmf_J = self.kkm_objective(values, nmf_labels, K).j_value
        oracle_J = self.kkm_objective(values, oracle_labels, K).j_value
        match = labels_match(nmf_labels, oracle_labels)
        if not match:
            logger.warning(
                f"Factorization labels differ from the exhaustive optimum "
                f"(J gap {nmf_J - oracle_J:.6g}, seed {cfg.seed})"
            )
        return EquivalenceReport(
            match=match,
            nmf_labels=frozen_array(nmf_labels, dtype=int),
            oracle_labels=frozen_array(oracle_labels, dtype=int),
            nmf_J=nmf_J,
            oracle_J=oracle_J,
        )


# Global kernel K-means service instance
kernel_kmeans_service = KernelKMeansService()


def get_kernel_kmeans_service() -> KernelKMeansService:
    """Get the global kernel K-means service instance."""
    return kernel_kmeans_service
