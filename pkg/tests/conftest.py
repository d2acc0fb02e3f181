import numpy as np
import pytest

from app.agents.experiment_runner import ExperimentRunner
from app.models.schemas import DistanceMatrix, FactorizeConfig
from app.services.baseline_service import BaselineService
from app.services.datagen_service import DatagenService
from app.services.hsh_service import HshService
from app.services.kernel_kmeans_service import KernelKMeansService
from app.services.metrics_service import MetricsService
from app.services.symnmf_service import SymNmfService


@pytest.fixture
def datagen():
    """Fixture for a DatagenService instance."""
    return DatagenService()


@pytest.fixture
def fast_cfg():
    """Factorization config small enough for unit tests."""
    return FactorizeConfig(restarts=5, max_iters=300, seed=0)


@pytest.fixture
def block_matrix():
    """4 nodes: {0,1} and {2,3} at distance 1 inside, 10 across."""
    return DistanceMatrix(
        values=[
            [0.0, 1.0, 10.0, 10.0],
            [1.0, 0.0, 10.0, 10.0],
            [10.0, 10.0, 0.0, 1.0],
            [10.0, 10.0, 1.0, 0.0],
        ]
    )


@pytest.fixture
def random_matrix():
    """Factory for seeded random distance matrices."""

    def make(n: int, seed: int = 0, low: float = 1.0, high: float = 100.0) -> DistanceMatrix:
        rng = np.random.default_rng(seed)
        values = np.triu(rng.uniform(low, high, size=(n, n)), k=1)
        return DistanceMatrix(values=values + values.T)

    return make


@pytest.fixture
def runner_factory():
    """Factory for ExperimentRunners wired to serial services and a short bootstrap."""

    def make(max_workers: int = 1) -> ExperimentRunner:
        symnmf = SymNmfService(max_workers=1)
        return ExperimentRunner(
            datagen=DatagenService(),
            hsh=HshService(symnmf=symnmf),
            baselines=BaselineService(symnmf=symnmf),
            metrics=MetricsService(resamples=100),
            kernel=KernelKMeansService(symnmf=symnmf),
            max_workers=max_workers,
        )

    return make


@pytest.fixture
def runner(runner_factory):
    """Fixture for a serial ExperimentRunner."""
    return runner_factory()
