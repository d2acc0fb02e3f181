"""
Data schemas for hshcluster.
Single Responsibility: Data validation and serialization only.
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.config import settings


def frozen_array(value: Any, dtype: Any = float) -> np.ndarray:
    """Copy `value` into a read-only numpy array."""
    array = np.array(value, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


class MatrixFormat(str, Enum):
    """On-disk matrix formats."""

    WHITESPACE_GRID = "whitespace_grid"
    CSV = "csv"


class Method(str, Enum):
    """Clustering methods compared by the experiments."""

    HSH = "hsh"
    CENTRALIZED = "centralized"
    SVD = "svd"
    VIVALDI = "vivaldi"
    ORIGIN = "origin"


class SweepKind(str, Enum):
    """Parameter varied by the `sweep` command."""

    LANDMARKS = "landmarks"
    CLUSTERS = "clusters"


class UpdateRule(str, Enum):
    """Denominator of the H multiplicative update."""

    PAPER = "paper"  # H H^T W H S
    STANDARD = "standard"  # H S H^T H S


class SilhouetteVariant(str, Enum):
    """How b_i is formed from the other clusters."""

    POOLED = "pooled"
    NEAREST = "nearest"


class OutputFormat(str, Enum):
    """Format of experiment tables."""

    JSON = "json"
    CSV = "csv"


class Preset(str, Enum):
    """Named dataset generators."""

    PAPER_SYNTHETIC = "paper-synthetic"
    PLANTED_3 = "planted-3"
    DYNAMIC_99 = "dynamic-99"


# Base Models
class BaseSchema(BaseModel):
    """Base schema with common configurations."""

    model_config = ConfigDict(from_attributes=True)


class ArraySchema(BaseModel):
    """Immutable schema holding numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# Matrix Models
class DistanceMatrix(ArraySchema):
    """Symmetric nonnegative n x n matrix with a zero diagonal."""

    values: np.ndarray
    node_ids: Optional[List[str]] = None

    @field_validator("values", mode="before")
    @classmethod
    def validate_values(cls, v):
        array = np.array(v, dtype=float, copy=True)
        if array.ndim != 2 or array.shape[0] != array.shape[1] or array.shape[0] == 0:
            raise ValueError(f"Distance matrix must be square and nonempty, got {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("Distance matrix entries must be finite")
        if np.any(array < 0):
            raise ValueError("Distance matrix entries must be nonnegative")
        if np.any(np.diag(array) != 0):
            raise ValueError("Distance matrix diagonal must be zero")
        if not np.array_equal(array, array.T):
            raise ValueError("Distance matrix must be exactly symmetric")
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def validate_node_ids(self):
        if self.node_ids is not None and len(self.node_ids) != self.n:
            raise ValueError(f"Expected {self.n} node ids, got {len(self.node_ids)}")
        return self

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


class MatrixValidationReport(BaseSchema):
    """Outcome of inspecting a raw matrix before it becomes a DistanceMatrix."""

    is_valid: bool
    errors: List[str] = Field(default=[])
    warnings: List[str] = Field(default=[])
    zeroed_diagonal: int = 0
    asymmetric_pairs: int = 0


class PartialObservation(ArraySchema):
    """Landmark-landmark block plus target-to-landmark rows."""

    landmark_block: DistanceMatrix
    target_block: np.ndarray
    landmark_indices: List[int]
    target_indices: List[int]

    @field_validator("target_block", mode="before")
    @classmethod
    def validate_target_block(cls, v):
        array = np.array(v, dtype=float, copy=True)
        if array.ndim != 2:
            raise ValueError("Target block must be two-dimensional")
        if not np.all(np.isfinite(array)) or np.any(array < 0):
            raise ValueError("Target block entries must be nonnegative and finite")
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def validate_indices(self):
        if set(self.landmark_indices) & set(self.target_indices):
            raise ValueError("Landmark and target indices must be disjoint")
        if self.landmark_block.n != len(self.landmark_indices):
            raise ValueError("Landmark block size does not match landmark indices")
        if self.target_block.shape != (len(self.target_indices), len(self.landmark_indices)):
            raise ValueError(f"Target block has shape {self.target_block.shape}")
        return self

    @property
    def n(self) -> int:
        return len(self.landmark_indices) + len(self.target_indices)


# Spectral Models
class SignedEmbedding(ArraySchema):
    """Real coordinates plus a +/-1 signature reproducing W as a signed inner product."""

    coords: np.ndarray
    signature: np.ndarray
    eigenvalues: np.ndarray
    vectors: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.eigenvalues.shape[0])

    def reconstruct(self) -> np.ndarray:
        """Return sum_k signature[k] * coords[:, k] coords[:, k]^T."""
        return (self.coords * self.signature) @ self.coords.T


class NystromErrorReport(BaseSchema):
    """Squared Frobenius errors of the permuted block approximation."""

    landmark_error: float = Field(..., ge=0)
    cross_error: float = Field(..., ge=0)
    target_error: float = Field(..., ge=0)
    total: float = Field(..., ge=0)


# Factorization Models
class FactorizeConfig(BaseSchema):
    """Stopping rule, restarts and seeding for the multiplicative updates."""

    max_iters: int = Field(default_factory=lambda: settings.max_iters, ge=1)
    rel_tol: float = Field(default_factory=lambda: settings.rel_tol, gt=0)
    restarts: int = Field(default_factory=lambda: settings.restarts, ge=1)
    seed: int = 0
    epsilon_guard: float = Field(default_factory=lambda: settings.epsilon_guard, gt=0)
    update_rule: UpdateRule = Field(default_factory=lambda: UpdateRule(settings.update_rule))
    step_halvings: int = Field(default_factory=lambda: settings.step_halvings, ge=0)
    seeded_init: bool = Field(default_factory=lambda: settings.seeded_init)


class FactorPair(ArraySchema):
    """Nonnegative factor H (m x K) and core S (K x K)."""

    H: np.ndarray
    S: np.ndarray
    objective: float = 0.0
    trace: List[float] = Field(default=[])
    restart: int = 0
    iterations: int = 0

    @field_validator("H", "S", mode="before")
    @classmethod
    def validate_factor(cls, v):
        array = np.array(v, dtype=float, copy=True)
        if array.ndim != 2:
            raise ValueError("Factors must be two-dimensional")
        if np.any(array < 0):
            raise ValueError("Factors must be nonnegative")
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def validate_shapes(self):
        k = self.H.shape[1]
        if self.S.shape != (k, k):
            raise ValueError(f"S must be {k}x{k}, got {self.S.shape}")
        return self

    @property
    def K(self) -> int:
        return int(self.H.shape[1])

    @property
    def degenerate_columns(self) -> List[int]:
        return [int(k) for k in np.flatnonzero(~np.any(self.H > 0, axis=0))]


class ClusterValidity(BaseSchema):
    """Diagonal-versus-off-diagonal gap for one row of S."""

    cluster: int
    diagonal: float
    max_off_diagonal: float
    gap: float
    separated: bool


class ValidityReport(BaseSchema):
    """Per-cluster validity gaps read from S."""

    clusters: List[ClusterValidity]

    @property
    def separated_count(self) -> int:
        return sum(1 for c in self.clusters if c.separated)


class HshResult(ArraySchema):
    """Outcome of the two-stage landmark pipeline."""

    landmark_factors: FactorPair
    target_H: np.ndarray
    labels: np.ndarray
    validity: ValidityReport
    landmark_indices: List[int]
    target_indices: List[int]
    K: int
    L: int
    seed: int
    restarts: int
    stage2_residual: float = 0.0


# Kernel K-means Models
class PartitionObjective(ArraySchema):
    """Kernel K-means objective of a labeling."""

    labels: np.ndarray
    j_value: float
    trace_term: float
    empty_clusters: List[int] = Field(default=[])


class EquivalenceReport(ArraySchema):
    """Factorization labels compared with the exhaustive kernel K-means optimum."""

    match: bool
    nmf_labels: np.ndarray
    oracle_labels: np.ndarray
    nmf_J: float
    oracle_J: float

    @property
    def j_gap(self) -> float:
        return self.nmf_J - self.oracle_J


# Metrics Models
class Summary(ArraySchema):
    """Median, bootstrap interval and CDF samples of a metric."""

    median: float
    confidence_interval: Tuple[float, float]
    cdf_samples: np.ndarray


class QualityReport(ArraySchema):
    """Per-node silhouette coefficients and gain ratios with summaries."""

    silhouette: np.ndarray
    gain_ratio: np.ndarray
    median_silhouette: float
    median_gain: float
    silhouette_ci: Tuple[float, float]
    gain_ci: Tuple[float, float]
    silhouette_cdf: np.ndarray
    gain_cdf: np.ndarray
    per_cluster_silhouette: Dict[int, float]
    per_cluster_gain: Dict[int, float]
    excluded_gain: int = 0


# Baseline Models
class CoordinateEmbedding(ArraySchema):
    """Euclidean coordinates fitted to measured distances."""

    coords: np.ndarray
    embedding_error: float = Field(..., ge=0)
    method: str


class ClusteringResult(ArraySchema):
    """Labels from any method plus provenance."""

    method: Method
    labels: np.ndarray
    seed: int
    restarts: int
    validity: Optional[ValidityReport] = None
    s_matrix: Optional[np.ndarray] = None
    landmark_indices: Optional[List[int]] = None
    objective: Optional[float] = None
    degenerate_rows: int = 0


# Dataset Models
class PlantedDataset(ArraySchema):
    """Generated distances with the generator's ground truth."""

    points: Optional[np.ndarray] = None
    truth_labels: np.ndarray
    distances: DistanceMatrix
    separation: float
    seed: int
    params: Dict[str, Any] = Field(default={})


class MatrixSequence(ArraySchema):
    """Ordered frames of equally sized distance matrices."""

    frames: List[DistanceMatrix]
    frame_interval_seconds: float = 15.7

    @model_validator(mode="after")
    def validate_frames(self):
        if not self.frames:
            raise ValueError("A sequence needs at least one frame")
        sizes = {frame.n for frame in self.frames}
        if len(sizes) != 1:
            raise ValueError(f"All frames must share one size, got {sorted(sizes)}")
        return self


# Experiment Models
class DataSource(ArraySchema):
    """A loaded or generated dataset: distances plus optional coordinates and truth."""

    distances: DistanceMatrix
    points: Optional[np.ndarray] = None
    truth: Optional[np.ndarray] = None


class ExperimentSpec(BaseSchema):
    """One clustering experiment as requested on the command line."""

    method: Method = Method.HSH
    dataset: Optional[str] = None
    preset: Optional[Preset] = None
    k: int = Field(default=4, ge=2)
    landmarks: int = Field(default=30, ge=2)
    seed: int = 0
    restarts: int = Field(default_factory=lambda: settings.restarts, ge=1)
    out: str = Field(default_factory=lambda: settings.output_dir)

    @model_validator(mode="after")
    def validate_source(self):
        if (self.dataset is None) == (self.preset is None):
            raise ValueError("Exactly one of dataset or preset must be given")
        if self.method in (Method.HSH, Method.VIVALDI) and self.landmarks < self.k:
            raise ValueError(f"Need landmarks >= k, got L={self.landmarks}, K={self.k}")
        return self


class MetricsDocument(BaseSchema):
    """Summary metrics written into a result document."""

    median_silhouette: float
    silhouette_ci: List[float]
    median_gain: float
    gain_ci: List[float]
    excluded_gain: int = 0


class ResultDocument(BaseSchema):
    """Versioned JSON result of one clustering run."""

    schema_version: str = Field(default_factory=lambda: settings.schema_version)
    spec: ExperimentSpec
    labels: List[int]
    landmark_indices: Optional[List[int]] = None
    s_matrix: Optional[List[List[float]]] = None
    validity: Optional[ValidityReport] = None
    objective: Optional[float] = None
    metrics: MetricsDocument
    timings: Dict[str, float] = Field(default={})


class SweepRow(BaseSchema):
    """One (method, value, seed) cell of a parameter sweep."""

    method: Method
    sweep: SweepKind
    value: int
    seed: int
    median_silhouette: float
    silhouette_ci_low: float
    silhouette_ci_high: float
    median_gain: float
    gain_ci_low: float
    gain_ci_high: float
    target_error: Optional[float] = None
    seconds: float = 0.0


class ReplayRow(BaseSchema):
    """Per-frame medians for one method."""

    frame: int
    method: Method
    median_silhouette: float
    median_gain: float
