import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from warpdn.errors import IntegrabilityError, ProfileError
from warpdn.profiles import (Antiderivative, CoefficientProfile, constant_profile, expr_profile,
                             mesh_nodes, piecewise, polynomial_profile, power_profile, restrict,
                             standoff, power)


def test_power_integral_matches_closed_form():
    # int_0^1 x^-0.5 = 2, int_0^1 x^0.3 = 1/1.3
    assert power_profile(1.0, 0.0, -0.5).integral() == pytest.approx(2.0, rel=1e-12)
    assert power_profile(1.0, 0.0, 0.3).integral() == pytest.approx(1 / 1.3, rel=1e-12)


def test_interior_singularity_is_split():
    prof = power_profile(1.0, 0.5, -0.5)
    assert len(prof.segments) == 2
    # abscissae next to x0 = 0.5 carry absolute rounding of order eps
    assert prof.integral() == pytest.approx(2 * 2 * math.sqrt(0.5), rel=1e-10)


def test_non_integrable_raises():
    with pytest.raises(IntegrabilityError):
        power_profile(1.0, 0.0, -1.0).l1_certificate("p")


def test_algebra_of_powers_is_exact():
    p = power_profile(2.0, 0.0, 0.5)
    q = p * p
    xs = np.linspace(0.01, 1, 7)
    np.testing.assert_allclose(q(xs), 4 * xs, rtol=1e-14)
    np.testing.assert_allclose(p.reciprocal()(xs), 0.5 / np.sqrt(xs), rtol=1e-14)
    assert (p ** 2).segments[0].kind in ("power", "composite")


def test_json_round_trip():
    prof = piecewise([polynomial_profile([1, 2], (0, 0.5)), power_profile(1.0, 1.0, -0.5, (0.5, 1.0))])
    back = CoefficientProfile.from_json(json.loads(json.dumps(prof.to_json())))
    xs = np.linspace(0, 0.99, 11)
    np.testing.assert_allclose(back(xs), prof(xs), rtol=1e-14)


def test_expr_profile_and_restrict():
    prof = expr_profile("2+sin(2*pi*x)")
    sub = restrict(prof, 0.25, 0.75)
    assert sub.interval == (0.25, 0.75)
    assert sub.integral() == pytest.approx(1.0, rel=1e-12)


def test_negative_profile_rejected_by_power():
    with pytest.raises(ProfileError):
        (constant_profile(-1.0)) ** 0.5


def test_antiderivative_and_inverse():
    F = Antiderivative(polynomial_profile([1.0, 2.0]))  # x + x^2
    xs = np.linspace(0, 1, 9)
    np.testing.assert_allclose(F(xs), xs + xs ** 2, atol=1e-14)
    np.testing.assert_allclose(F.inverse(F(xs)), xs, atol=1e-12)
    assert F.total == pytest.approx(2.0)


def test_standoff_grades_towards_nearby_centre():
    seg = power(1.0, 0.75, -2.0, (0.7501, 1.0))
    dl, dr = standoff(seg)
    assert dl == pytest.approx(1e-4) and dr == math.inf
    x = mesh_nodes(0.7501, 1.0, 16, near_left=dl)
    # cells next to the steep end are no wider than the distance to the centre
    assert np.all(np.diff(x)[:5] <= (x[:5] - 0.75) * 1.01)
    # and the integral is accurate: int 1/X^2 from 1e-4 to 1/4
    assert CoefficientProfile((0.7501, 1.0), (seg,)).integral() == pytest.approx(1e4 - 4.0, rel=1e-10)


@given(st.lists(st.floats(0.1, 3.0), min_size=1, max_size=4), st.lists(st.floats(0.1, 3.0), min_size=1, max_size=4))
def test_product_and_sum_are_pointwise(c1, c2):
    a, b = polynomial_profile(c1), polynomial_profile(c2)
    xs = np.linspace(0, 1, 13)
    np.testing.assert_allclose((a * b)(xs), a(xs) * b(xs), rtol=1e-12)
    np.testing.assert_allclose((a + b)(xs), a(xs) + b(xs), rtol=1e-12)


@given(st.floats(-0.9, 2.0), st.floats(0.2, 5.0))
def test_power_integral_property(s, a):
    exact = a / (1 + s)
    assert power_profile(a, 0.0, s).integral() == pytest.approx(exact, rel=1e-10)
