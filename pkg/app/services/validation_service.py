"""
Validation service for hshcluster.
Single Responsibility: Inspecting raw matrices before they become distance matrices.
"""

import logging
from typing import List, Tuple

import numpy as np

from app.models.schemas import MatrixValidationReport

logger = logging.getLogger(__name__)


class ValidationService:
    """Service for raw-matrix checks and repair accounting."""

    def validate_raw(self, raw: np.ndarray) -> MatrixValidationReport:
        """
        Inspect a raw square matrix.

        Args:
            raw: Candidate distance matrix as parsed from disk

        Returns:
            MatrixValidationReport; errors make the matrix unusable, warnings
            describe repairs symmetrize will apply
        """
        errors: List[str] = []
        warnings: List[str] = []
        raw = np.asarray(raw, dtype=float)

        if raw.ndim != 2 or raw.shape[0] != raw.shape[1] or raw.shape[0] == 0:
            errors.append(f"Matrix is not square: shape {raw.shape}")
            return MatrixValidationReport(is_valid=False, errors=errors, warnings=warnings)

        if not np.all(np.isfinite(raw)):
            errors.append(f"{int(np.sum(~np.isfinite(raw)))} non-finite entries")
            return MatrixValidationReport(is_valid=False, errors=errors, warnings=warnings)

        value_errors, zeroed, asymmetric = self._check_values(raw)
        errors.extend(value_errors)
        if zeroed:
            warnings.append(f"{zeroed} nonzero diagonal entries will be zeroed")
        if asymmetric:
            warnings.append(f"{asymmetric} asymmetric pairs will be averaged")

        return MatrixValidationReport(
            is_valid=not errors,
            errors=errors,
            warnings=warnings,
            zeroed_diagonal=zeroed,
            asymmetric_pairs=asymmetric,
        )

    def _check_values(self, raw: np.ndarray) -> Tuple[List[str], int, int]:
        errors = []
        averaged = (raw + raw.T) / 2
        off_diagonal = ~np.eye(raw.shape[0], dtype=bool)
        negative = int(np.sum((averaged < 0) & off_diagonal))
        if negative:
            errors.append(f"{negative} negative entries after symmetrization")
        zeroed = int(np.count_nonzero(np.diag(raw)))
        asymmetric = int(np.sum(np.triu(raw != raw.T, k=1)))
        return errors, zeroed, asymmetric

    def log_report(self, report: MatrixValidationReport, source: str) -> None:
        """Log the report the way the loaders surface it."""
        for warning in report.warnings:
            logger.warning(f"{source}: {warning}")
        for error in report.errors:
            logger.error(f"{source}: {error}")


# Global validation service instance
validation_service = ValidationService()


def get_validation_service() -> ValidationService:
    """Get the global validation service instance."""
    return validation_service
