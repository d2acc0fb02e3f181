"""
Dataset generation service for hshcluster.
Single Responsibility: Seeded synthetic inputs (Gaussian point clusters,
planted block matrices and jittered frame sequences).
"""

import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from app.models.schemas import DistanceMatrix, MatrixSequence, PlantedDataset, Preset, frozen_array

logger = logging.getLogger(__name__)

Counts = Union[int, Sequence[int]]
Range = Tuple[float, float]

MAX_CENTROID_DRAWS = 1000

PAPER_SYNTHETIC = {
    "K": 4,
    "per_cluster": 140,
    "d": 4,
    "spread": 1.0,
    "centroid_scale": 20.0,
    "min_gap": 8.0,
}
PLANTED_3 = {"K": 3, "per_cluster": 20, "intra_range": (5.0, 30.0), "inter_range": (80.0, 200.0)}
DYNAMIC_99 = {
    "K": 3,
    "per_cluster": 33,
    "intra_range": (5.0, 30.0),
    "inter_range": (80.0, 200.0),
    "frames": 688,
    "jitter_fraction": 0.1,
    "churn_rate": 0.0,
    "frame_interval_seconds": 15.7,
}


def _cluster_sizes(K: int, per_cluster: Counts) -> List[int]:
    if K < 2:
        raise ValueError(f"Need at least two clusters, got K={K}")
    sizes = [per_cluster] * K if isinstance(per_cluster, int) else [int(c) for c in per_cluster]
    if len(sizes) != K or min(sizes) < 1:
        raise ValueError(f"Expected {K} cluster sizes >= 1, got {sizes}")
    return sizes


def _check_range(name: str, bounds: Range) -> Range:
    low, high = float(bounds[0]), float(bounds[1])
    if not 0 <= low <= high:
        raise ValueError(f"{name} must satisfy 0 <= low <= high, got {bounds}")
    return low, high


class DatagenService:
    """Deterministic generators keyed by seed."""

    def synthetic_gaussian(
        self,
        K: int = 4,
        per_cluster: Counts = 140,
        d: int = 4,
        spread: float = 1.0,
        centroid_scale: float = 20.0,
        seed: int = 0,
        min_gap: float = 0.0,
    ) -> PlantedDataset:
        """
        Gaussian blobs around centroids drawn uniformly in [0, centroid_scale]^d.

        Centroids are redrawn until every pair is at least `min_gap` apart.

        Raises:
            ValueError: invalid sizes, or no admissible centroid set found
        """
        sizes = _cluster_sizes(K, per_cluster)
        if d < 1 or spread <= 0 or centroid_scale <= 0:
            raise ValueError(f"Invalid shape: d={d}, spread={spread}, scale={centroid_scale}")

        rng = np.random.default_rng(seed)
        centroids = self._draw_centroids(rng, K, d, centroid_scale, min_gap)
        truth = np.repeat(np.arange(K), sizes)
        points = centroids[truth] + rng.normal(scale=spread, size=(truth.size, d))

        radius = float(np.linalg.norm(points - centroids[truth], axis=1).max())
        gap = float(pdist(centroids).min())
        separation = gap / radius if radius > 0 else float("inf")
        params = {
            "generator": "synthetic_gaussian",
            "K": K,
            "per_cluster": sizes,
            "d": d,
            "spread": spread,
            "centroid_scale": centroid_scale,
            "min_gap": min_gap,
        }
        logger.info(f"Generated {truth.size} points in {K} clusters (separation {separation:.3g})")
        return PlantedDataset(
            points=frozen_array(points),
            truth_labels=frozen_array(truth, dtype=int),
            distances=DistanceMatrix(values=squareform(pdist(points))),
            separation=separation,
            seed=seed,
            params=params,
        )

    @staticmethod
    def _draw_centroids(
        rng: np.random.Generator, K: int, d: int, scale: float, min_gap: float
    ) -> np.ndarray:
        for _ in range(MAX_CENTROID_DRAWS):
            centroids = rng.uniform(0.0, scale, size=(K, d))
            if pdist(centroids).min() >= min_gap:
                return centroids
        raise ValueError(
            f"No centroid set with gap {min_gap} in [0, {scale}]^{d} "
            f"after {MAX_CENTROID_DRAWS} draws"
        )

    def planted_latency(
        self,
        K: int,
        per_cluster: Counts,
        intra_range: Range,
        inter_range: Range,
        seed: int = 0,
    ) -> PlantedDataset:
        """
        Block matrix with intra-cluster entries from intra_range and the rest
        from inter_range. Clusters occupy contiguous index ranges.

        separation = smallest inter-cluster entry / largest intra-cluster entry.
        """
        sizes = _cluster_sizes(K, per_cluster)
        intra = _check_range("intra_range", intra_range)
        inter = _check_range("inter_range", inter_range)
        values, truth = self._planted_blocks(sizes, intra, inter, seed)

        same = truth[:, None] == truth[None, :]
        off_diagonal = ~np.eye(truth.size, dtype=bool)
        separation = self._ratio(values[~same].min(), values[same & off_diagonal])
        return PlantedDataset(
            truth_labels=frozen_array(truth, dtype=int),
            distances=DistanceMatrix(values=values),
            separation=separation,
            seed=seed,
            params={
                "generator": "planted_latency",
                "K": K,
                "per_cluster": sizes,
                "intra_range": list(intra),
                "inter_range": list(inter),
            },
        )

    def planted_kernel(
        self,
        K: int,
        per_cluster: Counts,
        high_range: Range = (10.0, 12.0),
        low_range: Range = (1.0, 2.0),
        seed: int = 0,
    ) -> PlantedDataset:
        """
        Block matrix with LARGE intra-cluster entries, the layout the kernel
        K-means objective rewards.

        separation = smallest intra-cluster entry / largest inter-cluster entry.
        """
        sizes = _cluster_sizes(K, per_cluster)
        high = _check_range("high_range", high_range)
        low = _check_range("low_range", low_range)
        values, truth = self._planted_blocks(sizes, high, low, seed)

        same = truth[:, None] == truth[None, :]
        off_diagonal = ~np.eye(truth.size, dtype=bool)
        intra = values[same & off_diagonal]
        separation = self._ratio(intra.min() if intra.size else 0.0, values[~same])
        return PlantedDataset(
            truth_labels=frozen_array(truth, dtype=int),
            distances=DistanceMatrix(values=values),
            separation=separation,
            seed=seed,
            params={
                "generator": "planted_kernel",
                "K": K,
                "per_cluster": sizes,
                "high_range": list(high),
                "low_range": list(low),
            },
        )

    @staticmethod
    def _ratio(numerator: float, denominators: np.ndarray) -> float:
        top = float(denominators.max()) if denominators.size else 0.0
        return float(numerator) / top if top > 0 else float("inf")

    @staticmethod
    def _planted_blocks(
        sizes: List[int], intra: Range, inter: Range, seed: int
    ) -> Tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng(seed)
        truth = np.repeat(np.arange(len(sizes)), sizes)
        n = truth.size
        same = truth[:, None] == truth[None, :]
        values = np.where(
            same,
            rng.uniform(intra[0], intra[1], size=(n, n)),
            rng.uniform(inter[0], inter[1], size=(n, n)),
        )
        values = np.triu(values, k=1)
        return values + values.T, truth

    def dynamic_sequence(
        self,
        base: PlantedDataset,
        frames: int,
        jitter_fraction: float,
        churn_rate: float = 0.0,
        seed: int = 0,
        frame_interval_seconds: float = 15.7,
    ) -> MatrixSequence:
        """
        Frames of base * (1 + u), u uniform in [-jitter, +jitter], re-symmetrized.

        In each frame a churn_rate fraction of nodes has its row and column fully
        resampled from the base generator (fresh block entries for planted
        matrices, a fresh point around its centroid for Gaussian clusters).
        """
        if frames < 1:
            raise ValueError(f"Need at least one frame, got {frames}")
        if not 0 <= jitter_fraction < 1:
            raise ValueError(f"Jitter fraction must lie in [0, 1), got {jitter_fraction}")
        if not 0 <= churn_rate <= 1:
            raise ValueError(f"Churn rate must lie in [0, 1], got {churn_rate}")

        streams = np.random.SeedSequence(seed).spawn(frames)
        sequence = [self._frame(base, jitter_fraction, churn_rate, stream) for stream in streams]
        logger.info(f"Generated {frames} frames of {base.distances.n} nodes")
        return MatrixSequence(frames=sequence, frame_interval_seconds=frame_interval_seconds)

    def _frame(
        self,
        base: PlantedDataset,
        jitter: float,
        churn_rate: float,
        stream: np.random.SeedSequence,
    ) -> DistanceMatrix:
        rng = np.random.default_rng(stream)
        n = base.distances.n
        values = base.distances.values * (1.0 + rng.uniform(-jitter, jitter, size=(n, n)))
        churned = int(round(churn_rate * n))
        if churned:
            nodes = np.sort(rng.choice(n, size=churned, replace=False))
            rows = self._resampled_rows(base, nodes, rng)
            values[nodes, :] = rows
            values[:, nodes] = rows.T
        values = (values + values.T) / 2
        np.fill_diagonal(values, 0.0)
        return DistanceMatrix(values=values)

    @staticmethod
    def _resampled_rows(
        base: PlantedDataset, nodes: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        """Fresh distances from `nodes` to every node, drawn the way the base was generated."""
        params = base.params
        truth = np.asarray(base.truth_labels)
        generator = params.get("generator")
        if generator == "synthetic_gaussian":
            points = np.array(base.points, dtype=float)
            centroids = np.vstack([points[truth == k].mean(axis=0) for k in range(params["K"])])
            points[nodes] = centroids[truth[nodes]] + rng.normal(
                scale=params["spread"], size=(nodes.size, points.shape[1])
            )
            return cdist(points[nodes], points)
        if generator == "planted_latency":
            near, far = params["intra_range"], params["inter_range"]
        elif generator == "planted_kernel":
            near, far = params["high_range"], params["low_range"]
        else:
            raise ValueError(f"Cannot resample rows of a {generator or 'loaded'} dataset")
        same = truth[nodes][:, None] == truth[None, :]
        return np.where(
            same,
            rng.uniform(near[0], near[1], size=same.shape),
            rng.uniform(far[0], far[1], size=same.shape),
        )

    def preset_dataset(self, preset: Preset, seed: int = 0) -> PlantedDataset:
        """The static dataset behind a named preset (the base matrix for dynamic presets)."""
        preset = Preset(preset)
        if preset == Preset.PAPER_SYNTHETIC:
            return self.synthetic_gaussian(seed=seed, **PAPER_SYNTHETIC)
        config = PLANTED_3 if preset == Preset.PLANTED_3 else DYNAMIC_99
        return self.planted_latency(
            config["K"], config["per_cluster"], config["intra_range"], config["inter_range"], seed
        )

    def preset_sequence(
        self, preset: Preset, seed: int = 0, frames: Optional[int] = None
    ) -> Tuple[PlantedDataset, MatrixSequence]:
        """Base dataset and frame sequence of a dynamic preset."""
        if Preset(preset) != Preset.DYNAMIC_99:
            raise ValueError(f"Preset {preset} does not describe a sequence")
        base = self.preset_dataset(preset, seed)
        sequence = self.dynamic_sequence(
            base,
            frames or DYNAMIC_99["frames"],
            DYNAMIC_99["jitter_fraction"],
            DYNAMIC_99["churn_rate"],
            seed,
            DYNAMIC_99["frame_interval_seconds"],
        )
        return base, sequence

    @staticmethod
    def is_dynamic(preset: Preset) -> bool:
        return Preset(preset) == Preset.DYNAMIC_99


# Global datagen service instance
datagen_service = DatagenService()


def get_datagen_service() -> DatagenService:
    """Get the global datagen service instance."""
    return datagen_service
