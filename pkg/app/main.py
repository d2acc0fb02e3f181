"""
Command-line entry point for hshcluster.
Dependency Inversion: Commands talk to the experiment runner, never to services directly.
"""

import argparse
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from app.agents.experiment_runner import ExperimentRunner, get_experiment_runner
from app.core.config import settings
from app.core.errors import UsageError, exit_code_for
from app.models.schemas import (
    EquivalenceReport,
    ExperimentSpec,
    Method,
    OutputFormat,
    Preset,
    QualityReport,
    ReplayRow,
    ResultDocument,
    SweepKind,
    SweepRow,
)

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.log_level.upper(), logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)

console = Console()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.app_name,
        description="Landmark-based proximity clustering of distance matrices",
    )
    parser.add_argument("--version", action="version", version=settings.app_version)
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", help="write a preset dataset to disk")
    generate.add_argument("--preset", required=True, choices=[p.value for p in Preset])
    generate.add_argument("--seed", type=int, default=0)
    generate.add_argument("--out", default=settings.output_dir)
    generate.add_argument("--frames", type=int, default=None, help="frames for dynamic presets")

    cluster = commands.add_parser("cluster", help="cluster one dataset with one method")
    _add_experiment_arguments(cluster)
    cluster.add_argument("--format", choices=[f.value for f in OutputFormat], default="json")

    sweep = commands.add_parser("sweep", help="sweep landmark or cluster counts")
    _add_experiment_arguments(sweep)
    sweep.add_argument("--sweep", required=True, choices=[s.value for s in SweepKind])
    sweep.add_argument("--values", type=int, nargs="*", default=[])
    sweep.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    sweep.add_argument("--methods", nargs="+", choices=[m.value for m in Method], default=None)
    sweep.add_argument("--format", choices=[f.value for f in OutputFormat], default="csv")

    replay = commands.add_parser("replay", help="per-frame metrics over a matrix sequence")
    _add_experiment_arguments(replay, sources=False)
    replay.add_argument("--dataset", required=True, help="directory holding sequence.json")
    replay.add_argument("--methods", nargs="+", choices=[m.value for m in Method], default=None)
    replay.add_argument("--format", choices=[f.value for f in OutputFormat], default="csv")

    spectrum = commands.add_parser("spectrum", help="export the eigenvalue spectrum")
    _add_source_arguments(spectrum)
    spectrum.add_argument("--seed", type=int, default=0)
    spectrum.add_argument("--out", default=settings.output_dir)

    theorem = commands.add_parser("theorem", help="factorization vs exhaustive kernel K-means")
    theorem.add_argument("--k", type=int, default=3)
    theorem.add_argument("--per-cluster", type=int, default=3)
    theorem.add_argument("--seeds", type=int, default=10)
    theorem.add_argument("--seed", type=int, default=0)
    theorem.add_argument("--restarts", type=int, default=settings.restarts)
    theorem.add_argument("--out", default=settings.output_dir)
    return parser


def _add_source_arguments(parser: argparse.ArgumentParser):
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--dataset", help="matrix file (.txt grid or .csv)")
    source.add_argument("--preset", choices=[p.value for p in Preset])


def _add_experiment_arguments(parser: argparse.ArgumentParser, sources: bool = True):
    if sources:
        _add_source_arguments(parser)
    parser.add_argument("--method", choices=[m.value for m in Method], default=Method.HSH.value)
    parser.add_argument("--k", type=int, default=4)
    parser.add_argument("--landmarks", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--restarts", type=int, default=settings.restarts)
    parser.add_argument("--out", default=settings.output_dir)


def experiment_spec(args: argparse.Namespace) -> ExperimentSpec:
    """Build the validated spec; invalid combinations are usage errors."""
    try:
        return ExperimentSpec(
            method=getattr(args, "method", Method.HSH.value),
            dataset=args.dataset,
            preset=getattr(args, "preset", None),
            k=getattr(args, "k", 4),
            landmarks=getattr(args, "landmarks", 30),
            seed=args.seed,
            restarts=getattr(args, "restarts", settings.restarts),
            out=args.out,
        )
    except ValidationError as e:
        raise UsageError(f"Invalid experiment: {e.errors()[0]['msg']}") from e


def _methods(names: Optional[Sequence[str]]) -> Optional[List[Method]]:
    return [Method(name) for name in names] if names else None


def show_cluster(document: ResultDocument, report: QualityReport):
    table = Table(title=f"{document.spec.method.value} clustering (K={document.spec.k})")
    table.add_column("Metric")
    table.add_column("Value", justify="right")
    low, high = report.silhouette_ci
    table.add_row("Median silhouette", f"{report.median_silhouette:.4f}")
    table.add_row("Silhouette 95% CI", f"[{low:.4f}, {high:.4f}]")
    low, high = report.gain_ci
    table.add_row("Median gain ratio", f"{report.median_gain:.4f}")
    table.add_row("Gain ratio 95% CI", f"[{low:.4f}, {high:.4f}]")
    if report.excluded_gain:
        table.add_row("Singletons excluded", str(report.excluded_gain))
    if document.validity is not None:
        separated = document.validity.separated_count
        table.add_row("Separated clusters", f"{separated}/{len(document.validity.clusters)}")
    for stage, seconds in document.timings.items():
        table.add_row(f"Time: {stage}", f"{seconds:.2f}s")
    console.print(table)


def show_sweep(rows: List[SweepRow]):
    table = Table(title="Sweep")
    for column in ("Method", "Value", "Seed", "Median silhouette", "Median gain", "Seconds"):
        table.add_column(column, justify="right")
    for row in rows:
        table.add_row(
            row.method.value,
            str(row.value),
            str(row.seed),
            f"{row.median_silhouette:.4f}",
            f"{row.median_gain:.4f}",
            f"{row.seconds:.2f}",
        )
    console.print(table)


def show_replay(rows: List[ReplayRow]):
    table = Table(title="Replay")
    for column in ("Method", "Frames", "Median silhouette", "Silhouette IQR", "Median gain"):
        table.add_column(column, justify="right")
    for method in sorted({row.method for row in rows}, key=lambda m: m.value):
        chosen = [row for row in rows if row.method == method]
        silhouettes = np.array([row.median_silhouette for row in chosen])
        q1, q3 = np.percentile(silhouettes, [25, 75])
        table.add_row(
            method.value,
            str(len(chosen)),
            f"{np.median(silhouettes):.4f}",
            f"{q3 - q1:.4f}",
            f"{np.median([row.median_gain for row in chosen]):.4f}",
        )
    console.print(table)


def show_theorem(reports: List[EquivalenceReport]):
    matches = sum(1 for report in reports if report.match)
    table = Table(title="Factorization vs exhaustive optimum")
    table.add_column("Instances", justify="right")
    table.add_column("Matches", justify="right")
    table.add_column("Largest J gap", justify="right")
    gap = max(report.j_gap for report in reports) if reports else 0.0
    table.add_row(str(len(reports)), str(matches), f"{gap:.3g}")
    console.print(table)


def dispatch(args: argparse.Namespace, runner: ExperimentRunner) -> int:
    """Run the parsed command."""
    if args.command == "generate":
        written = runner.generate(Preset(args.preset), args.seed, args.out, frames=args.frames)
        console.print(f"Wrote {len(written)} files to {args.out}")
    elif args.command == "cluster":
        document, report = runner.cluster(experiment_spec(args), OutputFormat(args.format))
        show_cluster(document, report)
    elif args.command == "sweep":
        rows = runner.sweep(
            experiment_spec(args),
            SweepKind(args.sweep),
            args.values,
            seeds=args.seeds,
            methods=_methods(args.methods),
            fmt=OutputFormat(args.format),
        )
        show_sweep(rows)
    elif args.command == "replay":
        rows = runner.replay(
            Path(args.dataset),
            experiment_spec(args),
            methods=_methods(args.methods),
            fmt=OutputFormat(args.format),
        )
        show_replay(rows)
    elif args.command == "spectrum":
        rows = runner.spectrum(experiment_spec(args))
        console.print(f"Wrote {len(rows)} eigenvalues to {args.out}")
    else:
        if args.k < 2 or args.per_cluster < 1 or args.seeds < 1 or args.restarts < 1:
            raise UsageError("theorem needs k >= 2, per-cluster >= 1, seeds >= 1, restarts >= 1")
        reports = runner.theorem(
            args.k, args.per_cluster, args.seeds, args.seed, args.restarts, args.out
        )
        show_theorem(reports)
    return 0


def main(argv: Optional[Sequence[str]] = None, runner: Optional[ExperimentRunner] = None) -> int:
    """
    Parse arguments, run the command and map failures to exit codes.

    0 success, 2 usage, 3 unreadable or missing file, 4 invalid input,
    5 numerical failure.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    runner = runner or get_experiment_runner()
    try:
        return dispatch(args, runner)
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"{args.command} failed ({type(e).__name__}): {e}")
        return code


if __name__ == "__main__":
    raise SystemExit(main())
