import numpy as np
import pytest

from fracfujita.config import settings
from fracfujita.core.kernel import build_kernel_profile
from fracfujita.core.operators import Field, SpaceGrid
from fracfujita.core.specfun import ModelParams


@pytest.fixture(scope="session")
def params_15():
    return ModelParams(alpha=1.5, beta=0.5, dim=1)


@pytest.fixture(scope="session")
def profile_15(params_15):
    """(alpha, beta, d) = (1.5, 0.5, 1): eta_c = 3, finite cusp at the origin."""
    return build_kernel_profile(params_15)


@pytest.fixture(scope="session")
def profile_cauchy_half():
    """(1, 0.5, 1): d = alpha, log-singular at the origin."""
    return build_kernel_profile(ModelParams(alpha=1.0, beta=0.5, dim=1))


@pytest.fixture(scope="session")
def profile_gauss():
    """Classical heat kernel (2, 1, 1)."""
    return build_kernel_profile(ModelParams(alpha=2.0, beta=1.0, dim=1))


@pytest.fixture
def narrow_data():
    """Unit-mass data of width 0.04 on a wide fine grid."""
    grid = SpaceGrid.with_spacing(60.0, 0.01)
    return Field(grid=grid, values=grid.indicator(-0.02, 0.02) / 0.04)


@pytest.fixture
def data_dirs(tmp_path, monkeypatch):
    """Point every settings directory into tmp_path."""
    for name in ("log_dir", "cache_dir", "output_dir"):
        path = tmp_path / name
        path.mkdir()
        monkeypatch.setattr(settings, name, str(path))
    return tmp_path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
