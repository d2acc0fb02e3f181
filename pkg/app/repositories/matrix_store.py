"""
Data Access Object for matrix files.

This module encapsulates all file interaction: parsing grids, writing
canonical decimals, JSON sidecars and CSV tables. It knows nothing about
distance-matrix semantics; validation lives in the services.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.errors import FormatError
from app.models.schemas import MatrixFormat

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def format_value(value: float) -> str:
    """Shortest decimal that round-trips the binary value."""
    return repr(float(value))


class MatrixStore:
    """Handles all matrix file reads and writes."""

    def read_grid(
        self, path: PathLike, fmt: MatrixFormat = MatrixFormat.WHITESPACE_GRID
    ) -> Tuple[np.ndarray, Optional[List[str]]]:
        """Parse a numeric grid, returning the raw array and optional header ids."""
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            logger.error(f"Failed to read matrix file {path}: {e}")
            raise

        if fmt == MatrixFormat.CSV:
            rows, header = self._parse_csv(text)
        else:
            rows, header = self._parse_whitespace(text), None

        if not rows:
            raise FormatError(f"{path}: no rows found")
        widths = {len(row) for row in rows}
        if len(widths) != 1 or widths.pop() != len(rows):
            raise FormatError(f"{path}: grid is not square ({len(rows)} rows)")
        try:
            raw = np.array(rows, dtype=float)
        except ValueError as e:
            raise FormatError(f"{path}: non-numeric entry ({e})") from e
        if header is not None and len(header) != raw.shape[0]:
            raise FormatError(f"{path}: header has {len(header)} ids for {raw.shape[0]} rows")
        return raw, header

    def _parse_whitespace(self, text: str) -> List[List[str]]:
        return [line.split() for line in text.splitlines() if line.strip()]

    def _parse_csv(self, text: str) -> Tuple[List[List[str]], Optional[List[str]]]:
        rows = [row for row in csv.reader(text.splitlines()) if row]
        header = None
        if rows and (
            not all(self._is_number(field) for field in rows[0]) or self._has_id_row(rows)
        ):
            header = [field.strip() for field in rows[0]]
            rows = rows[1:]
        for i, row in enumerate(rows):
            if any(not field.strip() for field in row):
                raise FormatError(f"Missing entry in CSV row {i}")
        return [[field.strip() for field in row] for row in rows], header

    @staticmethod
    def _has_id_row(rows: List[List[str]]) -> bool:
        # numeric ids: one more row than columns, every row the same width
        width = len(rows[0])
        return len(rows) == width + 1 and all(len(row) == width for row in rows)

    @staticmethod
    def _is_number(field: str) -> bool:
        try:
            float(field)
            return True
        except ValueError:
            return False

    def read_points(self, path: PathLike) -> np.ndarray:
        """Parse an n x d coordinate grid (rows need not be square)."""
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            logger.error(f"Failed to read points file {path}: {e}")
            raise
        rows = self._parse_whitespace(text)
        if not rows or len({len(row) for row in rows}) != 1:
            raise FormatError(f"{path}: ragged or empty coordinate grid")
        try:
            return np.array(rows, dtype=float)
        except ValueError as e:
            raise FormatError(f"{path}: non-numeric entry ({e})") from e

    def write_grid(
        self,
        values: np.ndarray,
        path: PathLike,
        fmt: MatrixFormat = MatrixFormat.WHITESPACE_GRID,
        node_ids: Optional[Sequence[str]] = None,
    ) -> Path:
        """Write a 2-D array with canonical decimal formatting."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        separator = "," if fmt == MatrixFormat.CSV else " "
        lines = []
        if fmt == MatrixFormat.CSV and node_ids is not None:
            lines.append(",".join(node_ids))
        for row in np.asarray(values):
            lines.append(separator.join(format_value(v) for v in row))
        path.write_text("\n".join(lines) + "\n")
        return path

    def write_json(self, data: Dict[str, Any], path: PathLike) -> Path:
        """Write a JSON document with sorted keys."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        return path

    def read_json(self, path: PathLike) -> Dict[str, Any]:
        path = Path(path)
        try:
            return json.loads(path.read_text())
        except OSError as e:
            logger.error(f"Failed to read JSON file {path}: {e}")
            raise
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: invalid JSON ({e})") from e

    def write_table(
        self, header: Sequence[str], rows: Iterable[Sequence[Any]], path: PathLike
    ) -> Path:
        """Write a CSV table; floats use canonical formatting."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow(
                    [format_value(v) if isinstance(v, (float, np.floating)) else v for v in row]
                )
        return path

    def read_table(self, path: PathLike) -> List[Dict[str, str]]:
        """Read a CSV table written by `write_table` as one dict per row."""
        path = Path(path)
        try:
            with path.open(newline="") as handle:
                return list(csv.DictReader(handle))
        except OSError as e:
            logger.error(f"Failed to read table {path}: {e}")
            raise


# Global store instance
matrix_store = MatrixStore()


def get_matrix_store() -> MatrixStore:
    """Get the global matrix store instance."""
    return matrix_store
