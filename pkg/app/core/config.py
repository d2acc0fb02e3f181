"""
Configuration management for hshcluster.
Single Responsibility: Application configuration only.
"""

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings with environment variable support."""

    # Application
    app_name: str = "hshcluster"
    app_version: str = "0.1.0"
    log_level: str = "INFO"
    schema_version: str = "1.0"
    output_dir: str = "results"
    max_workers: int = 1

    # Stage-1 factorization
    max_iters: int = 500
    rel_tol: float = 1e-6
    restarts: int = 20
    epsilon_guard: float = 1e-12
    update_rule: str = "paper"  # "paper" or "standard"
    step_halvings: int = 10
    seeded_init: bool = True  # restart 0 starts from K-means on the rows of W

    # Stage-2 extension
    ridge_scale: float = 1e-10

    # Spectral
    eig_tol: float = 1e-10
    rank_tol: float = 1e-8

    # Metrics
    bootstrap_resamples: int = 1000
    confidence: float = 0.95

    # Kernel K-means
    brute_force_max_nodes: int = 12
    kmeans_max_iters: int = 300

    # Vivaldi
    vivaldi_cc: float = 0.25
    vivaldi_ce: float = 0.25
    vivaldi_dimension: int = 5
    vivaldi_iters: int = 200

    class Config:
        env_file = ".env"
        case_sensitive = False
        env_prefix = "HSH_"


# Global settings instance
settings = Settings()
