import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cvkit.core import PriceIncome, PublicBundle, additive_separable_power, generic_homothetic, log_power_weighted, power_weighted
from cvkit.errors import CardinalityError, SpecificationError
from cvkit.homogeneity import (
    PropertyId,
    check_expenditure_scaling,
    check_hicksian_scaling,
    check_indirect_utility_scaling,
    check_marshallian_invariance,
    check_mrs_ray_invariance,
    estimate_degree,
    marginal_rates,
    measure_degrees,
)

PI = PriceIncome([1.0, 2.0], 12.0)
Z14 = PublicBundle([1.0, 4.0])


def test_estimate_degree_private_and_public():
    spec = power_weighted(0.5)
    point = np.array([1.0, 4.0, 1.0, 4.0])

    def f(v):
        return spec.underlying_fn(PublicBundle(v[2:]))(v[:2])

    est_x = estimate_degree(f, point, [0, 1])
    est_z = estimate_degree(f, point, [2, 3])
    assert est_x.degree == pytest.approx(0.5, abs=1e-12)
    assert est_x.max_log_residual < 1e-10
    assert est_z.degree == pytest.approx(1.0, abs=1e-12)


def test_estimate_degree_rejects_narrow_grid():
    with pytest.raises(ValueError):
        estimate_degree(lambda v: float(v[0]), np.array([1.0]), None, (1.0, 1.1))


def test_measure_degrees():
    eta, theta = measure_degrees(power_weighted(0.3), [1.0, 2.0], Z14)
    assert eta.degree == pytest.approx(0.3, abs=1e-10)
    assert theta.degree == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize(
    "mode,pid", [("joint", PropertyId.INDIRECT_JOINT), ("independent", PropertyId.INDIRECT_INDEPENDENT),
                 ("private", PropertyId.INDIRECT_PRIVATE), ("public", PropertyId.INDIRECT_PUBLIC)]
)
def test_indirect_utility_modes(mode, pid):
    report = check_indirect_utility_scaling(power_weighted(0.5), PI, Z14, mode)
    assert report.property_id is pid
    assert report.passed and report.worst_violation < 1e-5


def test_indirect_public_matches_closed_form_ratio():
    report = check_indirect_utility_scaling(power_weighted(0.5), PI, Z14, "public", t_grid=(0.5, 2.0, 3.0))
    w = report.witnesses[-1]
    assert w.point["t"] == 3.0
    assert w.measured == pytest.approx(3 * 10.392304845413264, rel=1e-9)


def test_cardinal_checks_refuse_transforms():
    with pytest.raises(CardinalityError):
        check_indirect_utility_scaling(log_power_weighted(0.5), PI, Z14, "joint")
    with pytest.raises(CardinalityError):
        check_expenditure_scaling(log_power_weighted(0.5), 7.0, [1, 2], Z14, "joint")


def test_unknown_mode():
    with pytest.raises(ValueError):
        check_indirect_utility_scaling(power_weighted(0.5), PI, Z14, "sideways")


def test_marshallian_invariance():
    assert check_marshallian_invariance(log_power_weighted(0.5), PI, Z14).passed


def test_expenditure_joint():
    report = check_expenditure_scaling(power_weighted(0.5), 5.0, [1, 2], Z14, "joint")
    assert report.passed and report.measured["gamma"] == 1.5


def test_public_scaling_slope_for_log_family():
    report = check_expenditure_scaling(log_power_weighted(0.5), [6.0, 8.0], [1, 2], Z14, "homothetic")
    assert report.passed
    assert report.measured["phi_hat"] == pytest.approx(-2.0, abs=1e-8)


def test_public_scaling_negative_control():
    spec = additive_separable_power(2.0)
    report = check_expenditure_scaling(spec, [3.0, 10.0], [1, 1], PublicBundle([0.5, 0.5]), "homothetic")
    assert not report.passed
    slopes = [report.measured["phi_hat[u=3]"], report.measured["phi_hat[u=10]"]]
    assert abs(slopes[0] - slopes[1]) > 0.05


def test_hicksian_scaling():
    report = check_hicksian_scaling(log_power_weighted(0.5), math.log(9) + 5, [1, 2], Z14, t_grid=(0.5, 2.0, 4.0))
    assert report.passed
    by_t = {(w.point["t"], w.point["quantity"]): w.measured for w in report.witnesses}
    assert by_t[(4.0, "x1")] == pytest.approx(1 / 16, rel=1e-6)
    assert by_t[(4.0, "x2")] == pytest.approx(4 / 16, rel=1e-6)
    assert by_t[(4.0, "x1/x2")] == pytest.approx(0.25, rel=1e-6)


def test_hicksian_scaling_negative_control():
    report = check_hicksian_scaling(additive_separable_power(2.0), 3.0, [1, 1], PublicBundle([0.5, 0.5]))
    assert not report.passed


def test_degree_one_expenditure_holds_but_hicksian_demand_scales():
    # For joint degree 1, e(tu; t z1) = t e(u; z1) at fixed prices, so the
    # Hicksian bundle has to grow by t as well; it cannot be invariant.
    spec = generic_homothetic(lambda x, z1, z2: (x[0] * x[1]) ** 0.25 * z1[0] ** 0.5, 0.5, 0.5,
                              n_private=2, n_public=1)
    report = check_expenditure_scaling(spec, 2.0, [1, 2], PublicBundle([3.0]), "degree1")
    assert report.measured["expenditure_worst_violation"] < 1e-9
    assert report.measured["hicksian_degree"] == pytest.approx(1.0, abs=1e-6)
    assert not report.passed


def test_degree_one_mode_requires_unit_degree():
    with pytest.raises(SpecificationError):
        check_expenditure_scaling(power_weighted(0.5), 5.0, [1, 2], Z14, "degree1")


def test_mrs_formula():
    alpha = 0.5
    x = np.array([1.0, 4.0])
    _, mrs = marginal_rates(power_weighted(alpha), x, Z14)
    assert mrs[0, 1] == pytest.approx((1 / 4) * (x[0] / x[1]) ** (alpha - 1), rel=1e-6)


@pytest.mark.parametrize("spec", [power_weighted(0.5), log_power_weighted(0.3), additive_separable_power(2.0)])
def test_mrs_ray_invariance(spec):
    z = Z14 if spec.phi is not None else PublicBundle([1.0, 1.0])
    report = check_mrs_ray_invariance(spec, [1.0, 4.0], z)
    assert report.passed and report.degenerate == 0


def test_report_serialises():
    d = check_marshallian_invariance(power_weighted(0.5), PI, Z14).to_dict()
    assert d["property_id"] == "marshallian_invariance"
    assert isinstance(d["witnesses"][0]["point"]["t"], float)


@given(alpha=st.floats(0.1, 0.9), t=st.floats(0.2, 5.0), m=st.floats(1.0, 30.0))
def test_marshallian_invariance_property(alpha, t, m):
    report = check_marshallian_invariance(power_weighted(alpha), PI.with_income(m), Z14, t_grid=(t,))
    assert report.passed
