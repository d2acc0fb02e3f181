"""
Core agent for orchestrating clustering experiments.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.config import settings
from app.core.errors import UsageError
from app.models.schemas import (
    BaseSchema,
    ClusteringResult,
    DataSource,
    EquivalenceReport,
    ExperimentSpec,
    FactorizeConfig,
    MatrixFormat,
    Method,
    MetricsDocument,
    OutputFormat,
    Preset,
    QualityReport,
    ReplayRow,
    ResultDocument,
    SweepKind,
    SweepRow,
)
from app.repositories.matrix_store import MatrixStore, matrix_store
from app.services.baseline_service import BaselineService, baseline_service
from app.services.datagen_service import DatagenService, datagen_service
from app.services.hsh_service import HshService, hsh_service
from app.services.kernel_kmeans_service import KernelKMeansService, kernel_kmeans_service
from app.services.matrix_service import MatrixService, matrix_service
from app.services.metrics_service import MetricsService, metrics_service
from app.services.spectral_service import SpectralService, spectral_service

logger = logging.getLogger(__name__)

LOG_SEPARATOR = "=" * 80
PROGRESS_BAR_WIDTH = 50

SEQUENCE_MANIFEST = "sequence.json"
CDF_HEADER = ["value", "cum_fraction"]
SWEEP_HEADER = list(SweepRow.model_fields)
REPLAY_HEADER = list(ReplayRow.model_fields)
LANDMARK_METHODS = (Method.HSH, Method.VIVALDI)


class ExperimentRunner:
    """Orchestrates generate, cluster, sweep, replay, spectrum and theorem jobs."""

    def __init__(
        self,
        matrix: Optional[MatrixService] = None,
        datagen: Optional[DatagenService] = None,
        hsh: Optional[HshService] = None,
        baselines: Optional[BaselineService] = None,
        metrics: Optional[MetricsService] = None,
        spectral: Optional[SpectralService] = None,
        kernel: Optional[KernelKMeansService] = None,
        store: Optional[MatrixStore] = None,
        max_workers: Optional[int] = None,
    ):
        self.matrix = matrix or matrix_service
        self.datagen = datagen or datagen_service
        self.hsh = hsh or hsh_service
        self.baselines = baselines or baseline_service
        self.metrics = metrics or metrics_service
        self.spectral = spectral or spectral_service
        self.kernel = kernel or kernel_kmeans_service
        self.store = store or matrix_store
        self.max_workers = max_workers if max_workers is not None else settings.max_workers

    def _log_header(self, message: str):
        logger.info("")
        logger.info(LOG_SEPARATOR)
        logger.info(f"🚀 {message}")
        logger.info(LOG_SEPARATOR)

    def _log_progress(self, step: int, total: int, message: str):
        """Log progress with a progress bar."""
        percentage = (step / total) * 100
        filled_width = int((step / total) * PROGRESS_BAR_WIDTH)
        bar = "█" * filled_width + "░" * (PROGRESS_BAR_WIDTH - filled_width)
        timestamp = datetime.now().strftime("%H:%M:%S")
        logger.info(f"[{timestamp}] [{bar}] {percentage:5.1f}% | {message}")

    def _log_success(self, message: str):
        timestamp = datetime.now().strftime("%H:%M:%S")
        logger.info(f"[{timestamp}] ✅ {message}")

    def _log_error(self, message: str):
        timestamp = datetime.now().strftime("%H:%M:%S")
        logger.error(f"[{timestamp}] ❌ {message}")

    def _log_duration(self, start_time: float):
        duration = time.perf_counter() - start_time
        logger.info(f"⏱️  Operation completed in {duration:.2f} seconds")

    # Sources

    def load_source(self, spec: ExperimentSpec) -> DataSource:
        """Load the dataset file or build the preset named by the spec."""
        if spec.preset is not None:
            dataset = self.datagen.preset_dataset(spec.preset, spec.seed)
            return DataSource(
                distances=dataset.distances, points=dataset.points, truth=dataset.truth_labels
            )

        path = Path(spec.dataset)
        fmt = MatrixFormat.CSV if path.suffix.lower() == ".csv" else MatrixFormat.WHITESPACE_GRID
        distances = self.matrix.load_matrix(path, fmt)
        points_path = path.with_name(f"{path.stem}.points.txt")
        points = self.store.read_points(points_path) if points_path.exists() else None
        if points is not None and points.shape[0] != distances.n:
            raise UsageError(f"{points_path} has {points.shape[0]} rows for {distances.n} nodes")
        return DataSource(distances=distances, points=points)

    def check_sizes(self, method: Method, n: int, k: int, landmarks: int):
        """Reject cluster or landmark counts the data cannot support."""
        if k > n:
            raise UsageError(f"Cluster count {k} exceeds node count {n}")
        if method in LANDMARK_METHODS and not k <= landmarks <= n:
            raise UsageError(f"Landmark count must lie in [{k}, {n}], got {landmarks}")

    # Methods

    def run_method(
        self,
        method: Method,
        source: DataSource,
        k: int,
        landmarks: int,
        seed: int,
        restarts: int,
    ) -> Tuple[ClusteringResult, Optional[float]]:
        """
        Cluster one source with one method.

        Returns:
            The clustering and, for HSH, the hidden-block approximation error
        """
        W = source.distances
        self.check_sizes(method, W.n, k, landmarks)
        cfg = FactorizeConfig(restarts=restarts, seed=seed)

        if method in LANDMARK_METHODS:
            chosen = self.hsh.select_landmarks(W.n, landmarks, seed)
            obs = self.matrix.extract_observation(W, chosen)
        if method == Method.HSH:
            result = self.hsh.run_hsh(obs, k, cfg)
            H = self.hsh.full_factor(result)
            report = self.spectral.nystrom_error(
                W, np.maximum(H, 0.0), result.landmark_factors.S, result.landmark_indices
            )
            return self.hsh.clustering_result(result), report.target_error
        if method == Method.CENTRALIZED:
            return self.baselines.centralized_nmf(W, k, cfg), None
        if method == Method.SVD:
            return self.baselines.svd_kmeans(W, None, k, cfg), None
        if method == Method.VIVALDI:
            return self.baselines.vivaldi_kmeans(obs, k, seed=seed, restarts=restarts), None
        if source.points is None:
            raise UsageError("Method origin needs point coordinates (<name>.points.txt)")
        return self.baselines.origin_kmeans(source.points, k, seed=seed, restarts=restarts), None

    # Commands

    def cluster(
        self, spec: ExperimentSpec, fmt: OutputFormat = OutputFormat.JSON
    ) -> Tuple[ResultDocument, QualityReport]:
        """
        Run one method, score it and write result.json plus the two CDF files.

        With the csv format the labels are also written as labels.csv.
        """
        start_time = time.perf_counter()
        self._log_header(f"Clustering with {spec.method.value} (K={spec.k}, seed={spec.seed})")
        timings: Dict[str, float] = {}

        try:
            mark = time.perf_counter()
            source = self.load_source(spec)
            timings["load"] = time.perf_counter() - mark
            self._log_progress(1, 3, f"Loaded {source.distances.n} nodes")

            mark = time.perf_counter()
            result, _ = self.run_method(
                spec.method, source, spec.k, spec.landmarks, spec.seed, spec.restarts
            )
            timings["cluster"] = time.perf_counter() - mark
            self._log_progress(2, 3, f"Clustered in {timings['cluster']:.2f}s")

            mark = time.perf_counter()
            report = self.metrics.quality_report(source.distances, result.labels, seed=spec.seed)
            timings["metrics"] = time.perf_counter() - mark
            self._log_progress(3, 3, f"Median silhouette {report.median_silhouette:.4f}")
        except Exception as e:
            self._log_error(f"Clustering failed: {e}")
            raise

        document = self.result_document(spec, result, report, timings)
        out = Path(spec.out)
        self.store.write_json(document.model_dump(mode="json"), out / "result.json")
        self.store.write_table(
            CDF_HEADER, self.metrics.cdf_rows(report.silhouette), out / "silhouette_cdf.csv"
        )
        self.store.write_table(
            CDF_HEADER, self.metrics.cdf_rows(report.gain_ratio), out / "gain_cdf.csv"
        )
        if fmt == OutputFormat.CSV:
            self.store.write_table(
                ["node", "label"], list(enumerate(document.labels)), out / "labels.csv"
            )
        self._log_success(f"Results written to {out}")
        self._log_duration(start_time)
        return document, report

    @staticmethod
    def result_document(
        spec: ExperimentSpec,
        result: ClusteringResult,
        report: QualityReport,
        timings: Dict[str, float],
    ) -> ResultDocument:
        return ResultDocument(
            spec=spec,
            labels=[int(label) for label in result.labels],
            landmark_indices=result.landmark_indices,
            s_matrix=result.s_matrix.tolist() if result.s_matrix is not None else None,
            validity=result.validity,
            objective=result.objective,
            metrics=MetricsDocument(
                median_silhouette=report.median_silhouette,
                silhouette_ci=list(report.silhouette_ci),
                median_gain=report.median_gain,
                gain_ci=list(report.gain_ci),
                excluded_gain=report.excluded_gain,
            ),
            timings=timings,
        )

    def sweep(
        self,
        spec: ExperimentSpec,
        sweep: SweepKind,
        values: Sequence[int],
        seeds: int = 1,
        methods: Optional[Sequence[Method]] = None,
        fmt: OutputFormat = OutputFormat.CSV,
    ) -> List[SweepRow]:
        """
        One row per (method, value, seed), written to sweep.csv in sorted order.

        Seeds run from spec.seed to spec.seed + seeds - 1.
        """
        if not values:
            raise UsageError("Sweep needs at least one value")
        if seeds < 1:
            raise UsageError(f"Need at least one seed, got {seeds}")
        methods = list(methods or [spec.method])
        start_time = time.perf_counter()
        self._log_header(f"Sweeping {sweep.value} over {list(values)} for {len(methods)} methods")

        source = self.load_source(spec)
        jobs = [
            (method, int(value), seed)
            for method in methods
            for value in sorted(set(values))
            for seed in range(spec.seed, spec.seed + seeds)
        ]

        def run(job: Tuple[Method, int, int]) -> SweepRow:
            method, value, seed = job
            if sweep == SweepKind.LANDMARKS:
                k, landmarks = spec.k, value
            else:
                k, landmarks = value, spec.landmarks
            mark = time.perf_counter()
            result, target_error = self.run_method(
                method, source, k, landmarks, seed, spec.restarts
            )
            seconds = time.perf_counter() - mark
            report = self.metrics.quality_report(source.distances, result.labels, seed=seed)
            return SweepRow(
                method=method,
                sweep=sweep,
                value=value,
                seed=seed,
                median_silhouette=report.median_silhouette,
                silhouette_ci_low=report.silhouette_ci[0],
                silhouette_ci_high=report.silhouette_ci[1],
                median_gain=report.median_gain,
                gain_ci_low=report.gain_ci[0],
                gain_ci_high=report.gain_ci[1],
                target_error=target_error,
                seconds=seconds,
            )

        rows = self._run_jobs(run, jobs, "sweep")
        rows.sort(key=lambda row: (row.method.value, row.value, row.seed))
        self.write_rows(SWEEP_HEADER, rows, Path(spec.out) / "sweep", fmt)
        self._log_success(f"Wrote {len(rows)} sweep rows to {spec.out}")
        self._log_duration(start_time)
        return rows

    def write_rows(
        self, header: Sequence[str], rows: Sequence[BaseSchema], stem: Path, fmt: OutputFormat
    ) -> Path:
        """Write table rows as `<stem>.csv` or as `<stem>.json` holding a row list."""
        records = [row.model_dump(mode="json") for row in rows]
        if fmt == OutputFormat.JSON:
            return self.store.write_json({"rows": records}, stem.with_suffix(".json"))
        return self.store.write_table(
            header,
            [[record[field] for field in header] for record in records],
            stem.with_suffix(".csv"),
        )

    def _run_jobs(self, run, jobs: list, label: str) -> list:
        """Run jobs serially or on a thread pool; results keep job order."""
        results = []
        if self.max_workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                for step, row in enumerate(pool.map(run, jobs), start=1):
                    self._log_progress(step, len(jobs), f"{label} job {step}/{len(jobs)}")
                    results.append(row)
        else:
            for step, job in enumerate(jobs, start=1):
                results.append(run(job))
                self._log_progress(step, len(jobs), f"{label} job {step}/{len(jobs)}")
        return results

    def replay(
        self,
        sequence_dir: Union[str, Path],
        spec: ExperimentSpec,
        methods: Optional[Sequence[Method]] = None,
        fmt: OutputFormat = OutputFormat.CSV,
    ) -> List[ReplayRow]:
        """
        Per-frame medians for each method over a generated sequence.

        Raises:
            FileNotFoundError: the manifest or a listed frame is missing
        """
        sequence_dir = Path(sequence_dir)
        methods = list(methods or [spec.method])
        start_time = time.perf_counter()
        manifest = self.store.read_json(sequence_dir / SEQUENCE_MANIFEST)
        frame_paths = [sequence_dir / name for name in manifest["frames"]]
        for path in frame_paths:
            if not path.exists():
                self._log_error(f"Missing frame file {path}")
                raise FileNotFoundError(f"Missing frame file {path}")
        self._log_header(f"Replaying {len(frame_paths)} frames for {len(methods)} methods")

        jobs = [(frame, method) for frame in range(len(frame_paths)) for method in methods]

        def run(job: Tuple[int, Method]) -> ReplayRow:
            frame, method = job
            source = DataSource(distances=self.matrix.load_matrix(frame_paths[frame]))
            result, _ = self.run_method(
                method, source, spec.k, spec.landmarks, spec.seed, spec.restarts
            )
            report = self.metrics.quality_report(source.distances, result.labels, seed=spec.seed)
            return ReplayRow(
                frame=frame,
                method=method,
                median_silhouette=report.median_silhouette,
                median_gain=report.median_gain,
            )

        rows = self._run_jobs(run, jobs, "replay")
        rows.sort(key=lambda row: (row.method.value, row.frame))
        self.write_rows(REPLAY_HEADER, rows, Path(spec.out) / "replay", fmt)
        self._log_success(f"Wrote {len(rows)} replay rows to {spec.out}")
        self._log_duration(start_time)
        return rows

    def generate(
        self, preset: Preset, seed: int, out: Union[str, Path], frames: Optional[int] = None
    ) -> List[Path]:
        """
        Write a preset dataset (grid + JSON sidecar, plus points when present),
        or a frame sequence with its manifest for dynamic presets.
        """
        preset = Preset(preset)
        out = Path(out)
        start_time = time.perf_counter()
        self._log_header(f"Generating {preset.value} (seed={seed})")
        written: List[Path] = []

        if self.datagen.is_dynamic(preset):
            base, sequence = self.datagen.preset_sequence(preset, seed, frames)
            names = []
            for index, frame in enumerate(sequence.frames):
                name = f"frame_{index:04d}.txt"
                written.append(self.matrix.write_matrix(frame, out / name))
                names.append(name)
                if (index + 1) % 100 == 0 or index + 1 == len(sequence.frames):
                    self._log_progress(index + 1, len(sequence.frames), f"Wrote {name}")
            manifest = {
                "preset": preset.value,
                "seed": seed,
                "frames": names,
                "frame_interval_seconds": sequence.frame_interval_seconds,
                "truth_labels": [int(label) for label in base.truth_labels],
                "params": base.params,
            }
            written.append(self.store.write_json(manifest, out / SEQUENCE_MANIFEST))
        else:
            dataset = self.datagen.preset_dataset(preset, seed)
            written.append(self.matrix.write_matrix(dataset.distances, out / f"{preset.value}.txt"))
            sidecar = {
                "preset": preset.value,
                "seed": seed,
                "truth_labels": [int(label) for label in dataset.truth_labels],
                "separation": dataset.separation,
                "params": dataset.params,
            }
            written.append(self.store.write_json(sidecar, out / f"{preset.value}.json"))
            if dataset.points is not None:
                written.append(
                    self.store.write_grid(dataset.points, out / f"{preset.value}.points.txt")
                )

        self._log_success(f"Wrote {len(written)} files to {out}")
        self._log_duration(start_time)
        return written

    def spectrum(self, spec: ExperimentSpec) -> List[Tuple[int, float, int]]:
        """Full eigenvalue spectrum of the source matrix, written to spectrum.csv."""
        source = self.load_source(spec)
        rows = self.spectral.spectrum_table(source.distances)
        self.store.write_table(
            ["rank", "eigenvalue", "signature"], rows, Path(spec.out) / "spectrum.csv"
        )
        self._log_success(f"Wrote {len(rows)} eigenvalues to {spec.out}")
        return rows

    def theorem(
        self, k: int, per_cluster: int, seeds: int, seed: int, restarts: int, out: Union[str, Path]
    ) -> List[EquivalenceReport]:
        """Factorization vs exhaustive kernel K-means on kernel-planted instances."""
        start_time = time.perf_counter()
        self._log_header(f"Equivalence check on {seeds} instances of {k}x{per_cluster} nodes")
        reports = []
        for step, instance_seed in enumerate(range(seed, seed + seeds), start=1):
            dataset = self.datagen.planted_kernel(k, per_cluster, seed=instance_seed)
            cfg = FactorizeConfig(restarts=restarts, seed=instance_seed)
            reports.append(self.kernel.equivalence_check(dataset.distances, k, cfg))
            self._log_progress(step, seeds, f"instance {instance_seed}")

        matches = sum(1 for report in reports if report.match)
        self.store.write_table(
            ["seed", "match", "nmf_J", "oracle_J"],
            [
                [instance_seed, report.match, report.nmf_J, report.oracle_J]
                for instance_seed, report in zip(range(seed, seed + seeds), reports)
            ],
            Path(out) / "theorem.csv",
        )
        self._log_success(f"{matches}/{seeds} instances match the exhaustive optimum")
        self._log_duration(start_time)
        return reports


# Global experiment runner instance
experiment_runner = ExperimentRunner()


def get_experiment_runner() -> ExperimentRunner:
    """Get the global experiment runner instance."""
    return experiment_runner
