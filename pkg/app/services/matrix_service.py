"""
Matrix service for hshcluster.
Single Responsibility: Loading, repairing and slicing distance matrices.
"""

import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from app.core.errors import FormatError
from app.models.schemas import DistanceMatrix, MatrixFormat, PartialObservation
from app.repositories.matrix_store import MatrixStore, matrix_store
from app.services.validation_service import ValidationService, validation_service

logger = logging.getLogger(__name__)


class MatrixService:
    """Owns the canonical DistanceMatrix construction paths."""

    def __init__(
        self,
        store: Optional[MatrixStore] = None,
        validator: Optional[ValidationService] = None,
    ):
        self.store = store or matrix_store
        self.validator = validator or validation_service

    def load_matrix(
        self,
        path: Union[str, Path],
        fmt: MatrixFormat = MatrixFormat.WHITESPACE_GRID,
    ) -> DistanceMatrix:
        """
        Load, validate and symmetrize a distance matrix file.

        Raises:
            OSError: unreadable file
            FormatError: non-square or non-numeric grid
            ValueError: negative or non-finite entries
        """
        raw, node_ids = self.store.read_grid(path, fmt)
        report = self.validator.validate_raw(raw)
        self.validator.log_report(report, str(path))
        if not report.is_valid:
            raise ValueError(f"{path}: " + "; ".join(report.errors))
        matrix = self.symmetrize(raw, node_ids=node_ids)
        logger.info(f"Loaded {matrix.n}x{matrix.n} distance matrix from {path}")
        return matrix

    def write_matrix(
        self,
        W: DistanceMatrix,
        path: Union[str, Path],
        fmt: MatrixFormat = MatrixFormat.WHITESPACE_GRID,
    ) -> Path:
        """Write W with shortest round-trip decimals."""
        return self.store.write_grid(W.values, path, fmt, node_ids=W.node_ids)

    def symmetrize(
        self, raw: np.ndarray, node_ids: Optional[Sequence[str]] = None
    ) -> DistanceMatrix:
        """
        Average forward and reverse entries and zero the diagonal.

        output[i][j] = (raw[i][j] + raw[j][i]) / 2
        """
        raw = np.asarray(raw, dtype=float)
        if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
            raise FormatError(f"Cannot symmetrize a matrix of shape {raw.shape}")
        if not np.all(np.isfinite(raw)):
            raise ValueError("Cannot symmetrize a matrix with non-finite entries")

        values = (raw + raw.T) / 2
        np.fill_diagonal(values, 0.0)
        if np.any(values < 0):
            raise ValueError("Negative distance after symmetrization")
        return DistanceMatrix(values=values, node_ids=list(node_ids) if node_ids else None)

    def extract_observation(
        self, W: DistanceMatrix, landmark_indices: Sequence[int]
    ) -> PartialObservation:
        """
        Split W into the observable landmark blocks.

        Target-target distances are never copied.
        """
        landmarks = [int(i) for i in landmark_indices]
        if not landmarks:
            raise IndexError("At least one landmark is required")
        if len(set(landmarks)) != len(landmarks):
            raise IndexError(f"Duplicate landmark indices: {landmarks}")
        out_of_range = [i for i in landmarks if i < 0 or i >= W.n]
        if out_of_range:
            raise IndexError(f"Landmark indices out of range [0, {W.n}): {out_of_range}")

        chosen = set(landmarks)
        targets = [i for i in range(W.n) if i not in chosen]
        ids = [W.node_ids[i] for i in landmarks] if W.node_ids else None
        landmark_block = DistanceMatrix(values=W.values[np.ix_(landmarks, landmarks)], node_ids=ids)
        target_block = W.values[np.ix_(targets, landmarks)].reshape(len(targets), len(landmarks))
        return PartialObservation(
            landmark_block=landmark_block,
            target_block=target_block,
            landmark_indices=landmarks,
            target_indices=targets,
        )

    def assemble_known(self, obs: PartialObservation) -> np.ndarray:
        """Rebuild the n x n matrix from observed blocks; hidden entries are NaN."""
        known = np.full((obs.n, obs.n), np.nan)
        lm = obs.landmark_indices
        tg = obs.target_indices
        known[np.ix_(lm, lm)] = obs.landmark_block.values
        if tg:
            known[np.ix_(tg, lm)] = obs.target_block
            known[np.ix_(lm, tg)] = obs.target_block.T
        return known


# Global matrix service instance
matrix_service = MatrixService()


def get_matrix_service() -> MatrixService:
    """Get the global matrix service instance."""
    return matrix_service
