import numpy as np
import pytest
from scipy import special
from scipy.integrate import solve_ivp, trapezoid

from fracfujita.core.dirichlet import (DirichletConfig, build_basis, dirichlet_kernel, dirichlet_march,
                                       fractional_difference_weights, kaplan_functional, kernel_tail_bound,
                                       mittag_leffler_decay_constant, ode_blowup_time, ode_critical_K)
from fracfujita.core.errors import DomainError
from fracfujita.core.operators import Field, TimeMesh
from fracfujita.core.solver import BLOWUP, GLOBAL
from fracfujita.core.specfun import ModelParams, mittag_leffler_neg


@pytest.fixture(scope="module")
def sine_basis():
    return build_basis(2.0, radius=1.0, n_grid=99, n_modes=16)


@pytest.fixture(scope="module")
def fractional_basis():
    return build_basis(1.5, radius=1.0, n_grid=199, n_modes=8)


def _mode_values(basis, amplitude, mode=0):
    coeffs = np.zeros(basis.count)
    coeffs[mode] = amplitude
    return basis.synthesize(coeffs)


def _mode_data(basis, amplitude):
    return Field(grid=basis.grid, values=_mode_values(basis, amplitude))


def test_fractional_difference_weights():
    np.testing.assert_allclose(fractional_difference_weights(2.0, 3), [2.0, -1.0, 0.0], atol=1e-15)
    g = fractional_difference_weights(1.5, 50)
    assert g[0] > 0
    assert np.all(g[1:] < 0)


def test_sine_basis_is_exact(sine_basis):
    assert not sine_basis.approximate
    assert sine_basis.eigenvalues[0] == pytest.approx(np.pi ** 2 / 4.0, rel=1e-12)
    assert sine_basis.orthonormality_residual() < 1e-10
    np.testing.assert_allclose(sine_basis.evaluate(sine_basis.interior), sine_basis.vectors, atol=1e-12)
    assert not np.any(sine_basis.evaluate([-1.5, 1.0, 2.0]))


def test_fractional_basis(fractional_basis):
    assert fractional_basis.approximate
    assert np.all(np.diff(fractional_basis.eigenvalues) > 0)
    assert np.all(fractional_basis.vectors[0] > 0)
    assert fractional_basis.orthonormality_residual() < 1e-10
    # first eigenvalue of the alpha = 1.5 fractional Laplacian on (-1, 1) is about 1.5976
    assert fractional_basis.eigenvalues[0] == pytest.approx(1.5976, rel=0.05)
    assert fractional_basis.describe()["modes"] == 8


def test_build_basis_rejects_bad_sizes():
    with pytest.raises(DomainError):
        build_basis(2.0, n_grid=100, n_modes=4)
    with pytest.raises(DomainError):
        build_basis(2.0, n_grid=5, n_modes=8)
    with pytest.raises(DomainError):
        build_basis(2.5, n_grid=11, n_modes=2)


def test_coefficients_and_synthesis_are_inverse(sine_basis):
    coeffs = np.zeros(sine_basis.count)
    coeffs[[0, 3]] = [0.7, 0.2]
    values = sine_basis.synthesize(coeffs)
    assert values[0] == 0.0 and values[-1] == 0.0
    np.testing.assert_allclose(sine_basis.coefficients(values), coeffs, atol=1e-12)


@pytest.mark.parametrize("basis_fixture", ["sine_basis", "fractional_basis"])
def test_kaplan_functional_of_the_modes(request, basis_fixture):
    basis = request.getfixturevalue(basis_fixture)
    assert kaplan_functional(_mode_data(basis, 1.0), basis) == pytest.approx(1.0, abs=1e-6)
    assert kaplan_functional(_mode_values(basis, 1.0, 1), basis) == pytest.approx(0.0, abs=1e-6)


def test_kaplan_functional_matches_a_trapezoid_sum(sine_basis):
    x = sine_basis.grid.x
    values = np.maximum(1.0 - x ** 2, 0.0) * (1.0 + 0.3 * np.sin(5.0 * x) ** 2)
    phi_1 = np.concatenate([[0.0], sine_basis.vectors[0], [0.0]])
    expected = trapezoid(values * phi_1, dx=sine_basis.h)
    assert kaplan_functional(values, sine_basis) == pytest.approx(expected, abs=1e-12)


def test_dirichlet_heat_kernel_matches_images(sine_basis):
    t = 0.1
    x = np.array([-0.6, 0.0, 0.35])
    y = np.array([-0.2, 0.5])
    u, v = x[:, None] + 1.0, y[None, :] + 1.0
    k = np.arange(-5, 6)[:, None, None]

    def gauss(z):
        return np.exp(-z ** 2 / (4.0 * t)) / np.sqrt(4.0 * np.pi * t)

    images = np.sum(gauss(u - v + 4.0 * k) - gauss(u + v + 4.0 * k), axis=0)
    np.testing.assert_allclose(dirichlet_kernel(sine_basis, 1.0, t, x, y), images, atol=1e-10)


def test_dirichlet_kernel_is_symmetric_and_reproduces_modes(sine_basis):
    nodes = sine_basis.interior
    kernel = dirichlet_kernel(sine_basis, 0.5, 0.3, nodes, nodes)
    np.testing.assert_allclose(kernel, kernel.T, atol=1e-14)
    decay = mittag_leffler_neg(0.5, sine_basis.eigenvalues[0] * 0.3 ** 0.5)[0]
    propagated = sine_basis.h * kernel @ sine_basis.vectors[0]
    np.testing.assert_allclose(propagated, decay * sine_basis.vectors[0], atol=1e-6)
    value, bound = dirichlet_kernel(sine_basis, 0.5, 0.3, 0.1, -0.2, with_bound=True)
    assert isinstance(value, float)
    assert 0.0 < bound < np.inf
    with pytest.raises(DomainError):
        dirichlet_kernel(sine_basis, 0.5, 0.0, 0.1, 0.1)


def test_kernel_tail_bound(sine_basis):
    assert kernel_tail_bound(build_basis(1.0, n_grid=31, n_modes=4), 0.5, 1.0) == np.inf
    assert kernel_tail_bound(sine_basis, 0.5, 4.0) < kernel_tail_bound(sine_basis, 0.5, 1.0)


def test_dirichlet_config_validation(sine_basis):
    mesh = TimeMesh.graded(1.0, 4)
    bad = np.zeros(sine_basis.grid.points)
    bad[0] = 1.0
    with pytest.raises(DomainError):
        DirichletConfig(basis=sine_basis, params=ModelParams(alpha=2.0, beta=0.5),
                        v0=Field(grid=sine_basis.grid, values=bad), mesh=mesh)
    other = build_basis(2.0, n_grid=49, n_modes=4)
    with pytest.raises(DomainError):
        DirichletConfig(basis=sine_basis, params=ModelParams(alpha=2.0, beta=0.5), v0=_mode_data(other, 1.0),
                        mesh=mesh)


def test_linear_modes_follow_mittag_leffler(sine_basis):
    K = 0.8
    mesh = TimeMesh.geometric(1e4, 20, 1e-2)
    config = DirichletConfig(basis=sine_basis, params=ModelParams(alpha=2.0, beta=0.5), v0=_mode_data(sine_basis, K),
                             mesh=mesh, nonlinear=False, confirm_refinement=False)
    trace = dirichlet_march(config)
    assert trace.verdict == GLOBAL
    nu_1 = sine_basis.eigenvalues[0]
    expected = K * special.erfcx(nu_1 * np.sqrt(trace.times))
    np.testing.assert_allclose(trace.kaplan, expected, rtol=1e-6, atol=1e-10)
    assert trace.modes.shape == (trace.times.size, sine_basis.count)
    assert np.all(np.abs(trace.modes[:, 1:]) < 1e-12)
    # polynomial decay: F(t) t^beta settles at K / (nu_1 sqrt(pi))
    assert trace.kaplan[-1] * np.sqrt(trace.times[-1]) == pytest.approx(K / (nu_1 * np.sqrt(np.pi)), rel=1e-3)


def test_classical_small_data_is_global(sine_basis):
    config = DirichletConfig(basis=sine_basis, params=ModelParams(alpha=2.0, beta=1.0, eta=0.5),
                             v0=_mode_data(sine_basis, 0.1), mesh=TimeMesh.graded(1.0, 40), blowup_threshold=1e3)
    trace = dirichlet_march(config)
    assert trace.verdict == GLOBAL
    assert trace.blowup_time is None
    assert trace.kaplan[-1] < trace.kaplan[0]


@pytest.mark.slow
def test_subordinated_small_data_blows_up(sine_basis):
    config = DirichletConfig(basis=sine_basis, params=ModelParams(alpha=2.0, beta=0.5, eta=0.5),
                             v0=_mode_data(sine_basis, 0.5), mesh=TimeMesh.graded(200.0, 400), blowup_threshold=1e3)
    trace = dirichlet_march(config)
    assert trace.verdict == BLOWUP
    assert np.isfinite(trace.blowup_time)


@pytest.mark.slow
def test_subordinated_tiny_data_still_blows_up(sine_basis):
    """beta = 0.5, eta = 0.5: beta(1 + eta) < 1, so any positive data blows up, here after roughly K^-2."""
    config = DirichletConfig(basis=sine_basis, params=ModelParams(alpha=2.0, beta=0.5, eta=0.5),
                             v0=_mode_data(sine_basis, 1e-3), mesh=TimeMesh.geometric(1e9, 1600, 1e-3),
                             blowup_threshold=1e3)
    trace = dirichlet_march(config)
    assert trace.verdict == BLOWUP
    assert 1e4 < trace.blowup_time < 1e9


def test_classical_tiny_data_is_global(sine_basis):
    config = DirichletConfig(basis=sine_basis, params=ModelParams(alpha=2.0, beta=1.0, eta=0.5),
                             v0=_mode_data(sine_basis, 1e-3), mesh=TimeMesh.geometric(100.0, 400, 1e-3),
                             blowup_threshold=1e3)
    trace = dirichlet_march(config)
    assert trace.verdict == GLOBAL
    assert trace.sup_norms[-1] < trace.sup_norms[0]


def test_ode_blowup_time_closed_forms():
    assert ode_blowup_time(0.5, 0.5, 1.0) == pytest.approx(0.0625)
    assert ode_blowup_time(0.5, 1.0, 2.0) == pytest.approx(np.exp(0.5))
    assert ode_critical_K(1.0, 1.0) == pytest.approx(1.0)
    assert ode_critical_K(0.5, 0.5) == 0.0
    assert ode_blowup_time(1.0, 1.0, 0.5) is None
    assert ode_blowup_time(1.0, 1.0, 2.0) == pytest.approx(2.0)
    assert ode_blowup_time(0.6, 1.0, 0.1) is None
    assert ode_blowup_time(0.6, 1.0, 10.0) is not None
    with pytest.raises(DomainError):
        ode_blowup_time(0.5, 0.5, 0.0)


def test_ode_blowup_time_grows_as_K_shrinks():
    times = [ode_blowup_time(0.5, 0.5, K) for K in (1.0, 0.1, 0.01)]
    assert all(np.isfinite(times))
    assert times[0] < times[1] < times[2]


def test_ode_blowup_time_matches_numeric_integration():
    # s = u^4 turns G' = s^{-3/4} G^{3/2} into dG/du = 4 G^{3/2}
    def hit(u, g):
        return g[0] - 1e16

    hit.terminal = True
    sol = solve_ivp(lambda u, g: 4.0 * g ** 1.5, (0.0, 1.0), [1.0], events=hit, method="DOP853",
                    rtol=1e-12, atol=1e-12)
    assert sol.t_events[0][0] ** 4 == pytest.approx(ode_blowup_time(0.5, 0.5, 1.0), abs=1e-6)


def test_mittag_leffler_decay_constant():
    assert mittag_leffler_decay_constant(1.0, 1.0, [1.0, 2.0]) == pytest.approx(2.0 * np.exp(-2.0))
