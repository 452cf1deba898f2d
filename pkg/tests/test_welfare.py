import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cvkit.core import PriceIncome, PublicBundle, additive_separable_power, generic_homothetic, log_power_weighted, power_weighted
from cvkit.duality import example2_closed_forms, example3_expenditure
from cvkit.errors import DomainError, SpecificationError
from cvkit.welfare import (
    CvQuery,
    compute_cv,
    cv_brute_force,
    cv_closed_form,
    cv_decomposition,
    cv_from_phi,
    cv_limit_diagnostics,
    cv_tolerance,
    implied_scaling,
)

EX2 = CvQuery(log_power_weighted(0.5), PriceIncome([1.0, 2.0], 9.0), PublicBundle([1.0, 4.0]), 2.0)


def test_example2_cv_all_routes():
    assert cv_closed_form(EX2) == -6.75
    assert cv_brute_force(EX2) == pytest.approx(-6.75, abs=1e-3)
    np.testing.assert_allclose(cv_decomposition(EX2), [-0.75, -6.0], atol=1e-6)


def test_example2_cv_from_closed_form_expenditures():
    # Independent path: difference of closed-form expenditures at the baseline utility.
    u0 = math.log(9) + 5
    before = example2_closed_forms(0.5, [1, 2], [1, 4], u0).expenditure
    after = example2_closed_forms(0.5, [1, 2], [2, 8], u0).expenditure
    assert after - before == pytest.approx(-6.75, abs=1e-12)


@pytest.mark.parametrize("phi,t,expected_share", [(-1, 2, -0.5), (-2, 2, -0.75), (-1, 0.5, 1.0), (-3.7, 1.0, 0.0)])
def test_numeric_cases(phi, t, expected_share):
    assert cv_from_phi(phi, t, 100.0) == expected_share * 100.0


def test_t_equal_one_gives_zero_everywhere():
    q = CvQuery(EX2.spec, EX2.pi, EX2.z, 1.0)
    result = compute_cv(q)
    assert result.cv_closed_form == 0.0
    assert abs(result.cv_brute_force) < 1e-9


def test_invalid_t():
    with pytest.raises(DomainError):
        CvQuery(EX2.spec, EX2.pi, EX2.z, 0.0)
    with pytest.raises(DomainError):
        cv_from_phi(-1.0, -2.0, 1.0)


def test_closed_form_needs_degrees():
    q = CvQuery(additive_separable_power(2.0), PriceIncome([1, 1], 4.0), PublicBundle([0.5, 0.5]), 2.0)
    with pytest.raises(SpecificationError):
        cv_closed_form(q)
    result = compute_cv(q)
    assert math.isnan(result.cv_closed_form) and math.isnan(result.phi_used)
    assert math.isfinite(result.cv_brute_force)


def test_separable_cv_is_not_a_power_law():
    # Brute-force CV from the closed-form separable expenditure at two utility
    # levels: the implied t**phi differs, so no constant phi reproduces both.
    z, p, t = [0.5, 0.5], [1, 1], 2.0
    implied = []
    for u in (3.0, 10.0):
        e0 = example3_expenditure(2.0, p, z, u)
        cv = example3_expenditure(2.0, p, [t * v for v in z], u) - e0
        implied.append(implied_scaling(cv, e0))
    assert abs(math.log(implied[0]) - math.log(implied[1])) > 0.05


def test_cv_result_dict():
    d = compute_cv(EX2).to_dict()
    assert set(d) == {"t", "cv_closed_form", "cv_brute_force", "per_good", "phi_used", "baseline_utility"}
    assert d["phi_used"] == -2.0


def test_transform_invariance():
    # Same underlying function, identity versus log transform: same CV.
    pi, z = PriceIncome([1.3, 0.7], 5.0), PublicBundle([2.0, 0.5])
    a = compute_cv(CvQuery(power_weighted(0.4), pi, z, 3.0)).cv_brute_force
    b = compute_cv(CvQuery(log_power_weighted(0.4), pi, z, 3.0)).cv_brute_force
    assert a == pytest.approx(b, abs=1e-6)


def test_generic_spec_cv():
    spec = generic_homothetic(lambda x, z1, z2: x[0] ** 0.3 * x[1] ** 0.7 * z1[0] ** 2, 1.0, 2.0, n_private=2, n_public=1)
    q = CvQuery(spec, PriceIncome([1, 1], 10.0), PublicBundle([1.0]), 2.0)
    r = compute_cv(q)
    assert r.cv_closed_form == pytest.approx(-7.5)
    assert abs(r.cv_brute_force - r.cv_closed_form) < cv_tolerance(10.0)


def test_limit_diagnostics_direction():
    diag = cv_limit_diagnostics(-1.0, 100.0)
    assert diag.direction == "+inf"
    assert diag.lower_bound == -100.0
    assert cv_limit_diagnostics(EX2).direction == "+inf"
    assert cv_limit_diagnostics(0.5, 10.0).direction == "finite"


def test_tolerance():
    assert cv_tolerance(1.0) == 1e-3
    assert cv_tolerance(1e5) == 10.0


@given(phi=st.floats(-5, -0.05), t=st.floats(0.05, 20.0), m=st.floats(0.1, 1e4))
def test_closed_form_properties(phi, t, m):
    cv = cv_from_phi(phi, t, m)
    assert cv > -m
    if t > 1:
        assert cv < 0
    elif t < 1:
        assert cv > 0
    assert cv_from_phi(phi, t, 2 * m) == 2 * cv


@given(alpha=st.floats(0.2, 0.8), t=st.floats(0.3, 4.0), m=st.floats(1.0, 40.0))
def test_brute_force_matches_closed_form_property(alpha, t, m):
    q = CvQuery(log_power_weighted(alpha), PriceIncome([1.0, 2.0], m), PublicBundle([1.0, 4.0]), t)
    r = compute_cv(q)
    assert abs(r.cv_brute_force - r.cv_closed_form) < cv_tolerance(m)
    assert abs(r.per_good.sum() - r.cv_closed_form) < cv_tolerance(m)
