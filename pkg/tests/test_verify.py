import numpy as np
import pytest

from fracfujita.config import settings
from fracfujita.core.errors import DomainError
from fracfujita.core.kernel import heat_kernel
from fracfujita.core.operators import SpaceGrid
from fracfujita.core.store import read_json
from fracfujita.verify import (HolderCheckParams, check_bounds_suite, check_derivatives, check_eta_star,
                               check_lp_decay, check_mass, check_monte_carlo, check_sampler, check_semigroup,
                               check_special_functions, holder_moment, mc_subordination_oracle, run_suite)


def test_monte_carlo_oracle_is_exact_without_time_fraction(profile_gauss):
    estimate, stderr = mc_subordination_oracle(profile_gauss.params, 2.0, 0.7, 1000, seed=1)
    assert stderr == 0.0
    assert estimate == pytest.approx(float(heat_kernel(profile_gauss, 2.0, 0.7)), rel=1e-6)
    with pytest.raises(DomainError):
        mc_subordination_oracle(profile_gauss.params, 1.0, 0.0, 999, seed=1)


def test_monte_carlo_agrees_with_the_kernel(profile_15):
    report = check_monte_carlo(profile_15, t=1.0, x=1.0, n_samples=20_000, seed=11)
    assert report.statistics["z_score"] < 4.0
    assert report.seeds == [11]


@pytest.mark.slow
def test_monte_carlo_agrees_with_the_log_singular_kernel(profile_cauchy_half):
    report = check_monte_carlo(profile_cauchy_half, t=1.0, x=1.0, n_samples=1_000_000, seed=settings.mc_seed)
    assert report.passed, report.measured
    assert report.statistics["z_score"] < 3.0


def test_monte_carlo_is_seed_reproducible(profile_15):
    a = mc_subordination_oracle(profile_15.params, 1.0, 0.5, 5000, seed=3)
    b = mc_subordination_oracle(profile_15.params, 1.0, 0.5, 5000, seed=3)
    assert a == b


def test_sampler_check():
    report = check_sampler(0.5, n_samples=20_000, seed=5)
    assert report.passed, report.failures
    assert 0.0 <= report.measured["ks_statistic"] < 0.05
    assert check_sampler(1.0).measured["skipped"]


def test_special_function_anchors():
    report = check_special_functions(0.5)
    assert report.passed, report.failures
    assert report.measured["bound_slack"] >= -1e-12
    assert check_special_functions(1.0).passed


def test_mass_check(profile_15):
    assert check_mass(profile_15).passed


def test_bounds_suite_when_d_below_alpha(profile_15):
    report = check_bounds_suite(profile_15)
    assert report.passed, report.failures
    assert set(report.measured) == {"envelope", "comparability"}
    assert report.measured["envelope"]["regime"] == "whole-range"


def test_bounds_suite_when_d_equals_alpha(profile_cauchy_half):
    report = check_bounds_suite(profile_cauchy_half)
    assert set(report.measured) == {"envelope", "interior_log"}
    assert report.measured["envelope"]["regime"] == "exterior-only"


def test_gaussian_derivative_ratios(profile_gauss):
    report = check_derivatives(profile_gauss, (HolderCheckParams(rho=1.0), HolderCheckParams(rho=1.0, weight="sup")))
    assert report.passed, report.failures
    assert report.measured["time_constant"] == pytest.approx(report.measured["gaussian_time_constant"], rel=1e-2)
    assert report.measured["holder_unit_1"]["slope"] == pytest.approx(1.0, abs=0.05)


def test_derivative_ratios_with_time_fraction(profile_15):
    report = check_derivatives(profile_15, (HolderCheckParams(rho=0.5),))
    assert report.passed, report.failures
    assert np.isfinite(report.measured["space_constant"])
    assert report.measured["holder_unit_0.5"]["moment"] == pytest.approx(holder_moment(1.5, 0.5, 0.5))


def test_holder_parameters_are_validated(profile_15):
    with pytest.raises(DomainError):
        HolderCheckParams(rho=1.2).validate(1.5)
    with pytest.raises(DomainError):
        HolderCheckParams(rho=0.5, weight="max").validate(1.5)
    with pytest.raises(DomainError):
        check_derivatives(profile_15, rel_step=1e-17)
    assert holder_moment(1.5, 0.5, 2.0) == np.inf
    assert holder_moment(2.0, 1.0, 1.0) == pytest.approx(1.0)


def test_lp_decay_of_the_sup_norm(profile_15, narrow_data):
    report = check_lp_decay(profile_15, narrow_data, 1.0, np.inf, np.geomspace(10.0, 1000.0, 16))
    assert report.name == "lp_decay_1_inf"
    assert report.passed
    assert report.measured["predicted"] == pytest.approx(1.0 / 3.0)


def test_lp_decay_rejects_bad_exponents(profile_15, narrow_data):
    with pytest.raises(DomainError):
        check_lp_decay(profile_15, narrow_data, 0.5, np.inf, np.geomspace(10.0, 1000.0, 4))
    with pytest.raises(DomainError):
        check_lp_decay(profile_15, narrow_data, 1.0, np.inf, [10.0, 50.0])


def test_semigroup_constants(profile_15, profile_cauchy_half):
    report = check_semigroup(profile_15, SpaceGrid.with_spacing(40.0, 0.2))
    assert report.passed, report.failures
    assert report.measured["source_eta"] == pytest.approx(6.0)
    young = report.measured["young"]
    assert 0.0 < young["2_1"] <= 1.0 + 1e-4
    assert 0.0 < young["2_inf"] <= 1.5 * profile_15.origin_value * (1.0 + 1e-4)
    assert report.seeds == [settings.mc_seed]
    assert check_semigroup(profile_cauchy_half).measured["skipped"]


def test_eta_star_check(profile_15, narrow_data):
    report = check_eta_star(profile_15, narrow_data)
    assert report.passed
    assert report.measured["eta_c"] == pytest.approx(3.0, rel=0.05)


def test_run_suite_writes_reports(profile_gauss, tmp_path):
    checks = ("special_functions", "mass", "sampler", "monte_carlo")
    rollup = run_suite(profile_gauss, out_dir=tmp_path, checks=checks, seed=9, samples=1000, jobs=2)
    assert rollup["passed"]
    assert list(rollup["checks"]) == sorted(checks)
    assert read_json(tmp_path / "rollup.json")["seed"] == 9
    for name in checks:
        assert read_json(tmp_path / f"{name}.json")["name"] == name
