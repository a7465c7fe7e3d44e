import numpy as np
import pytest

from fracfujita.core.errors import DomainError
from fracfujita.core.kernel import heat_kernel
from fracfujita.core.operators import (Field, KernelTable, MemoryOperator, NormSpec, SpaceGrid, TimeMesh, apply_A,
                                       apply_G, cell_kernel, norm, semigroup_surrogate, source_term_ratio,
                                       suggest_half_width)


def test_space_grid_layout():
    grid = SpaceGrid.with_spacing(10.0, 0.1)
    assert grid.points == 201
    assert grid.dx == pytest.approx(0.1)
    assert grid.x[grid.center] == 0.0
    assert grid.describe()["half_width"] == pytest.approx(10.0)
    with pytest.raises(DomainError):
        SpaceGrid(half_width=1.0, points=10)
    with pytest.raises(DomainError):
        SpaceGrid(half_width=0.0, points=11)


def test_indicator_has_exact_trapezoid_mass():
    grid = SpaceGrid.with_spacing(10.0, 0.1)
    field = Field(grid=grid, values=grid.indicator(-1.0, 1.0))
    assert field.mass() == pytest.approx(2.0, rel=1e-12)
    assert field.sup() == 1.0


def test_field_rejects_negative_or_misshaped_values():
    grid = SpaceGrid(half_width=1.0, points=5)
    with pytest.raises(DomainError):
        Field(grid=grid, values=np.array([0.0, 1.0, -1e-3, 0.0, 0.0]))
    with pytest.raises(DomainError):
        Field(grid=grid, values=np.zeros(4))


def test_graded_mesh_and_refinement():
    mesh = TimeMesh.graded(1.0, 4, 2.0)
    np.testing.assert_allclose(mesh.nodes, [0.0, 1.0 / 16.0, 0.25, 9.0 / 16.0, 1.0])
    fine = mesh.refined()
    assert fine.panels == 8
    np.testing.assert_allclose(fine.nodes, TimeMesh.graded(1.0, 8, 2.0).nodes)
    np.testing.assert_allclose(fine.nodes[::2], mesh.nodes)


def test_geometric_mesh_refines_by_midpoints():
    mesh = TimeMesh.geometric(10.0, 5, 0.01)
    assert mesh.nodes.size == 6
    assert mesh.nodes[1] == pytest.approx(0.01)
    fine = mesh.refined()
    assert fine.panels == 10
    assert fine.nodes[1] == pytest.approx(0.005)
    with pytest.raises(DomainError):
        TimeMesh.geometric(1.0, 5, 2.0)


def test_time_mesh_rejects_bad_nodes():
    with pytest.raises(DomainError):
        TimeMesh(nodes=np.array([0.0, 0.5, 0.5, 1.0]))
    with pytest.raises(DomainError):
        TimeMesh(nodes=np.array([0.1, 0.5]))


def test_fixed_point_norm_weight(params_15):
    spec = NormSpec.for_fixed_point(params_15.with_eta(5.0), 2.0)
    assert spec.p == 2.0
    assert spec.theta == pytest.approx(1.0 / 30.0)
    with pytest.raises(DomainError):
        NormSpec.for_fixed_point(params_15.with_eta(5.0), 1.5)
    with pytest.raises(DomainError):
        NormSpec(p=0.5)


def test_norms_of_a_constant_field():
    grid = SpaceGrid(half_width=1.0, points=101)
    field = Field(grid=grid, values=np.ones(grid.points), time_stamp=4.0)
    assert norm(field, NormSpec()) == pytest.approx(1.0)
    assert norm(field, NormSpec(p=1.0)) == pytest.approx(2.0)
    assert norm(field, NormSpec(p=2.0)) == pytest.approx(np.sqrt(2.0))
    assert norm(field, NormSpec(p=np.inf, theta=0.5)) == pytest.approx(2.0)


def test_cell_kernel_has_unit_mass(profile_15):
    grid = SpaceGrid.with_spacing(10.0, 0.1)
    kernel = cell_kernel(profile_15, grid, 1e-3)
    assert kernel.size == 2 * grid.points - 1
    assert kernel.sum() == pytest.approx(1.0, abs=1e-4)
    assert np.argmax(kernel) == grid.points - 1
    rows = cell_kernel(profile_15, grid, np.array([1e-3, 1.0]))
    np.testing.assert_allclose(rows[0], kernel)


def test_apply_G_conserves_mass_up_to_the_tail(profile_15, narrow_data):
    out = apply_G(profile_15, narrow_data, 1.0)
    assert out.time_stamp == 1.0
    assert out.mass() == pytest.approx(1.0, abs=2e-3)
    assert 0.0 <= out.tail_mass < 2e-3
    assert not out.truncated


def test_apply_G_flags_truncation(profile_15):
    grid = SpaceGrid.with_spacing(2.0, 0.1)
    out = apply_G(profile_15, Field(grid=grid, values=grid.indicator(-0.5, 0.5)), 10.0)
    assert out.truncated
    assert out.tail_mass > 0.01


def test_apply_G_of_zero_data_is_zero(profile_15):
    grid = SpaceGrid.with_spacing(5.0, 0.1)
    out = apply_G(profile_15, Field.zeros(grid), 2.0)
    assert not np.any(out.values)
    assert out.tail_mass == 0.0


def test_apply_G_requires_positive_time(profile_15, narrow_data):
    with pytest.raises(DomainError):
        apply_G(profile_15, narrow_data, 0.0)


def test_apply_G_reproduces_the_gaussian_semigroup(profile_gauss):
    grid = SpaceGrid.with_spacing(20.0, 0.05)
    v0 = Field(grid=grid, values=heat_kernel(profile_gauss, 1.0, grid.x))
    out = apply_G(profile_gauss, v0, 1.0)
    np.testing.assert_allclose(out.values, heat_kernel(profile_gauss, 2.0, grid.x), atol=1e-4)


def test_apply_A_of_a_constant_field(profile_15):
    grid = SpaceGrid.with_spacing(20.0, 0.1)
    c = 0.5
    history = [Field(grid=grid, values=np.full(grid.points, c), time_stamp=t) for t in (0.0, 0.25, 0.5, 1.0)]
    out = apply_A(profile_15, history, eta=1.0)
    assert out.time_stamp == 1.0
    assert out.values[grid.center] == pytest.approx(1.0 * c ** 2, rel=1e-2)


def test_apply_A_needs_a_panel(profile_15, narrow_data):
    with pytest.raises(DomainError):
        apply_A(profile_15, [narrow_data], eta=1.0)


def test_memory_operator_edge_cases(profile_15):
    grid = SpaceGrid.with_spacing(5.0, 0.1)
    table = KernelTable(profile_15, grid, 1.0)
    memory = MemoryOperator(table, eta=1.0)
    assert not np.any(memory.evaluate(0.5).values)
    memory.push(0.0, np.ones(grid.points))
    with pytest.raises(DomainError):
        memory.evaluate(0.0)
    linear_only = MemoryOperator(table, eta=1.0, nonlinear=False)
    linear_only.push(0.0, np.ones(grid.points))
    assert not np.any(linear_only.evaluate(0.5).values)
    memory.push(0.5, np.full(grid.points, np.inf))
    blown = memory.evaluate(1.0)
    assert blown.blown_up
    assert np.all(np.isinf(blown.values))


def test_memory_operator_history_grows_past_initial_capacity(profile_15):
    grid = SpaceGrid.with_spacing(5.0, 0.1)
    memory = MemoryOperator(KernelTable(profile_15, grid, 1.0), eta=1.0)
    for t in np.linspace(0.0, 0.9, 40):
        memory.push(t, np.zeros(grid.points))
    assert len(memory) == 40
    assert not np.any(memory.evaluate(1.0).values)


def test_suggest_half_width(profile_15, profile_gauss):
    assert suggest_half_width(profile_gauss, 4.0) == pytest.approx(24.0)
    L = suggest_half_width(profile_15, 10.0, tol=1e-3)
    lost = 2.0 * profile_15.tail_constant * 10.0 ** 0.5 * L ** -1.5 / 1.5
    assert lost == pytest.approx(1e-3, rel=1e-9)


def test_semigroup_surrogate_is_bounded(profile_15):
    value = semigroup_surrogate(profile_15, SpaceGrid.with_spacing(40.0, 0.1), 1.0, 1.0)
    assert np.isfinite(value)
    assert 0.5 < value < 10.0


def test_source_term_ratio_is_finite_when_supercritical(profile_15):
    value = source_term_ratio(profile_15, SpaceGrid.with_spacing(40.0, 0.2), TimeMesh.graded(2.0, 20), 1.0, 5.0)
    assert np.isfinite(value)
    assert value > 0.0
