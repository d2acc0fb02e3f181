"""
Metrics service for hshcluster.
Single Responsibility: Silhouette coefficients, gain ratios and their summaries.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.models.schemas import QualityReport, SilhouetteVariant, Summary, frozen_array
from app.services.symnmf_service import MatrixLike, as_square

logger = logging.getLogger(__name__)


class MetricsService:
    """Clustering-quality evaluation on a distance matrix."""

    def __init__(self, resamples: Optional[int] = None, confidence: Optional[float] = None):
        self.resamples = resamples if resamples is not None else settings.bootstrap_resamples
        self.confidence = confidence if confidence is not None else settings.confidence

    def intra_inter(
        self,
        D: MatrixLike,
        labels: Sequence[int],
        variant: SilhouetteVariant = SilhouetteVariant.POOLED,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Per-node a_i (mean distance within the own cluster, 0 for singletons) and
        b_i (mean distance to every other-cluster node, or to the nearest other
        cluster for the nearest variant).

        Raises:
            ValueError: fewer than two nonempty clusters
        """
        values = as_square(D)
        labels = np.asarray(labels, dtype=int)
        n = values.shape[0]
        if labels.shape != (n,):
            raise ValueError(f"Expected {n} labels, got {labels.shape[0]}")
        clusters, members = np.unique(labels, return_inverse=True)
        if clusters.size < 2:
            raise ValueError("Silhouette needs at least two nonempty clusters")

        one_hot = np.zeros((n, clusters.size))
        one_hot[np.arange(n), members] = 1.0
        sizes = one_hot.sum(axis=0)
        sums = values @ one_hot

        own_size = sizes[members]
        own_sum = sums[np.arange(n), members]
        a = np.divide(own_sum, own_size - 1, out=np.zeros(n), where=own_size > 1)

        if variant == SilhouetteVariant.NEAREST:
            means = sums / sizes
            means[np.arange(n), members] = np.inf
            b = means.min(axis=1)
        else:
            b = (sums.sum(axis=1) - own_sum) / (n - own_size)
        return a, b

    def silhouette(
        self,
        D: MatrixLike,
        labels: Sequence[int],
        variant: SilhouetteVariant = SilhouetteVariant.POOLED,
    ) -> np.ndarray:
        """s_i = (b_i - a_i) / max(a_i, b_i); 0 when both are 0."""
        a, b = self.intra_inter(D, labels, variant)
        scale = np.maximum(a, b)
        return np.divide(b - a, scale, out=np.zeros_like(a), where=scale > 0)

    def gain_ratio(
        self,
        D: MatrixLike,
        labels: Sequence[int],
        variant: SilhouetteVariant = SilhouetteVariant.POOLED,
    ) -> np.ndarray:
        """g_i = b_i / a_i; singleton nodes (a_i = 0) get +inf."""
        a, b = self.intra_inter(D, labels, variant)
        return np.divide(b, a, out=np.full_like(a, np.inf), where=a > 0)

    def summarize(self, values: Sequence[float], seed: int = 0) -> Summary:
        """
        Median, bootstrap confidence interval of the median and sorted samples.

        Raises:
            ValueError: empty or non-finite input
        """
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            raise ValueError("Cannot summarize an empty vector")
        if not np.all(np.isfinite(values)):
            raise ValueError("Cannot summarize non-finite values")

        rng = np.random.default_rng(seed)
        draws = rng.integers(0, values.size, size=(self.resamples, values.size))
        medians = np.median(values[draws], axis=1)
        tail = (1.0 - self.confidence) / 2 * 100
        low, high = np.percentile(medians, [tail, 100 - tail])
        return Summary(
            median=float(np.median(values)),
            confidence_interval=(float(low), float(high)),
            cdf_samples=frozen_array(np.sort(values)),
        )

    def quality_report(
        self,
        D: MatrixLike,
        labels: Sequence[int],
        variant: SilhouetteVariant = SilhouetteVariant.POOLED,
        seed: int = 0,
    ) -> QualityReport:
        """Silhouette and gain-ratio vectors with medians, intervals and CDF samples."""
        labels = np.asarray(labels, dtype=int)
        a, b = self.intra_inter(D, labels, variant)
        scale = np.maximum(a, b)
        silhouette = np.divide(b - a, scale, out=np.zeros_like(a), where=scale > 0)
        gain = np.divide(b, a, out=np.full_like(a, np.inf), where=a > 0)

        finite = np.isfinite(gain)
        excluded = int(np.sum(~finite))
        if excluded:
            logger.warning(f"{excluded} singleton nodes excluded from gain-ratio summaries")
        if not np.any(finite):
            raise ValueError("Every cluster is a singleton; gain ratio is undefined")

        sil_summary = self.summarize(silhouette, seed)
        gain_summary = self.summarize(gain[finite], seed)
        return QualityReport(
            silhouette=frozen_array(silhouette),
            gain_ratio=frozen_array(gain),
            median_silhouette=sil_summary.median,
            median_gain=gain_summary.median,
            silhouette_ci=sil_summary.confidence_interval,
            gain_ci=gain_summary.confidence_interval,
            silhouette_cdf=sil_summary.cdf_samples,
            gain_cdf=gain_summary.cdf_samples,
            per_cluster_silhouette=self._per_cluster(silhouette, labels),
            per_cluster_gain=self._per_cluster(gain, labels),
            excluded_gain=excluded,
        )

    @staticmethod
    def _per_cluster(values: np.ndarray, labels: np.ndarray) -> Dict[int, float]:
        medians = {}
        for cluster in np.unique(labels):
            chosen = values[labels == cluster]
            chosen = chosen[np.isfinite(chosen)]
            if chosen.size:
                medians[int(cluster)] = float(np.median(chosen))
        return medians

    @staticmethod
    def cdf_rows(values: Sequence[float]) -> List[Tuple[float, float]]:
        """(value, cumulative fraction) rows, ascending, finite values only."""
        values = np.sort(np.asarray(values, dtype=float))
        values = values[np.isfinite(values)]
        fractions = np.arange(1, values.size + 1) / values.size if values.size else values
        return [(float(v), float(f)) for v, f in zip(values, fractions)]


# Global metrics service instance
metrics_service = MetricsService()


def get_metrics_service() -> MetricsService:
    """Get the global metrics service instance."""
    return metrics_service
