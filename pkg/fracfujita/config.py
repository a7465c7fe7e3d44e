"""
config.py

Centralized configuration module for numerical defaults, cache and output directories,
and worker-pool sizing.
Compatible with Pydantic v2+ using `pydantic-settings`; every field can be overridden
with a ``FRAC_``-prefixed environment variable or a ``.env`` file.
"""

from pathlib import Path

import psutil
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

base_data_dir = Path(__file__).parent.parent / ".data"


def _default_jobs() -> int:
    return psutil.cpu_count(logical=False) or 1


class Settings(BaseSettings):
    """
    Centralized configuration for the application.
    """

    model_config = SettingsConfigDict(env_prefix="FRAC_", env_file=".env", env_file_encoding="utf-8")

    # Directories
    log_dir: str = str(base_data_dir / "logs")
    cache_dir: str = str(base_data_dir / "cache")
    output_dir: str = str(base_data_dir / "runs")

    # Stable density profile (t = 1, d = 1, generic alpha)
    stable_points: int = 2048
    stable_r_min: float = 1e-4
    stable_r_far: float = 40.0

    # Kernel profile
    profile_points: int = 2048
    profile_z_min: float = 1e-4
    profile_z_max: float = 1e4
    quadrature_panels: int = 64
    quadrature_budget: int = 1024
    quadrature_rtol: float = 1e-8

    # Marching / fixed point
    blowup_threshold: float = 1e6
    picard_tol: float = 1e-8
    picard_max_iters: int = 50
    mesh_grading: float = 2.0
    step_fraction: float = 0.05
    blowup_refine_tol: float = 0.15
    global_refine_tol: float = 0.05
    truncation_warn: float = 0.01
    truncation_fail: float = 0.05
    small_data_delta: float = 0.01
    small_data_halvings: int = 6

    # Dirichlet
    dirichlet_modes: int = 64

    # Verification
    mc_samples: int = 1_000_000
    mc_seed: int = 20240917

    # Worker pool
    jobs: int = Field(default_factory=_default_jobs)


settings = Settings()


def ensure_dirs() -> None:
    """Create the log, cache and output directories if they are missing."""
    for path in (settings.log_dir, settings.cache_dir, settings.output_dir):
        Path(path).mkdir(parents=True, exist_ok=True)
