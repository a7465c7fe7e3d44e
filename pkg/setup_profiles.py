"""
Builds and caches the kernel profiles and Dirichlet bases used by the default experiments.
"""

import logging

from fracfujita.config import ensure_dirs, settings
from fracfujita.core.specfun import ModelParams
from fracfujita.core.store import ArtifactCache

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

DEFAULT_PARAMS = [
    ModelParams(alpha=1.5, beta=0.5, dim=1),
    ModelParams(alpha=1.0, beta=0.5, dim=1),
    ModelParams(alpha=2.0, beta=1.0, dim=1),
    ModelParams(alpha=2.0, beta=0.5, dim=1),
]
DEFAULT_BASES = [(2.0, 1.0, 399), (1.5, 1.0, 399)]


def build_and_cache_profiles():
    """
    Builds every default profile and basis once so later runs only load them from the cache.
    """
    ensure_dirs()
    cache = ArtifactCache()
    for params in DEFAULT_PARAMS:
        logger.info(f"Preparing kernel profile for {params.summary()}")
        cache.kernel_profile(params)
    for alpha, radius, n_grid in DEFAULT_BASES:
        logger.info(f"Preparing Dirichlet basis alpha={alpha}, R={radius}")
        cache.spectral_basis(alpha, radius, n_grid, settings.dirichlet_modes)
    logger.info("Profiles and bases cached in: " + str(settings.cache_dir))


if __name__ == "__main__":
    build_and_cache_profiles()
