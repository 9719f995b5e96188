import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from warpdn.bessel import (NU_MAX, bessel_bounds_check, bessel_i, bessel_i_asymptotic,
                           bessel_i_series, bessel_ip, bessel_k, bessel_k_reflection, bessel_kp,
                           crossover)
from warpdn.errors import DomainError

mpmath.mp.dps = 30


def _rel(a, b):
    return abs(a - b) / abs(b)


@pytest.mark.parametrize("nu", [0.0, 0.3, 1.0, 2.5, 7.25, 20.0])
@pytest.mark.parametrize("x", [1e-3, 0.7, 5.0, 29.0, 31.0, 120.0, 650.0])
def test_i_against_mpmath(nu, x):
    ref = float(mpmath.besseli(nu, x))
    assert _rel(bessel_i(nu, x), ref) < 1e-12


@pytest.mark.parametrize("nu", [0.0, 0.4, 1.0, 3.5, 12.0])
@pytest.mark.parametrize("x", [1e-3, 0.5, 2.0, 2.5, 10.0, 80.0, 600.0])
def test_k_against_mpmath(nu, x):
    ref = float(mpmath.besselk(nu, x))
    assert _rel(bessel_k(nu, x), ref) < 1e-12


@pytest.mark.parametrize("x", [0.01, 0.5, 3.0, 25.0, 100.0])
def test_half_integer_closed_forms(x):
    # I_{1/2} = sqrt(2/(pi x)) sinh x, I_{-1/2} = sqrt(2/(pi x)) cosh x, K_{1/2} = sqrt(pi/(2x)) e^-x
    c = math.sqrt(2.0 / (math.pi * x))
    assert _rel(bessel_i(0.5, x), c * math.sinh(x)) < 1e-10
    assert _rel(bessel_i_series(-0.5, x), c * math.cosh(x)) < 1e-10
    assert _rel(bessel_k(0.5, x), math.sqrt(math.pi / (2 * x)) * math.exp(-x)) < 1e-10
    i32 = c * (math.cosh(x) - math.sinh(x) / x)
    assert _rel(bessel_i(1.5, x), i32) < 1e-10


def test_values_at_zero():
    assert bessel_i(0.0, 0.0) == 1.0
    assert bessel_i(1.3, 0.0) == 0.0


@pytest.mark.parametrize("nu", [0.5, 1.0, 2.0, 3.3])
def test_k_small_argument_law(nu):
    x = 1e-3
    lead = 2.0 ** (nu - 1.0) * math.gamma(nu) * x ** -nu
    assert _rel(bessel_k(nu, x), lead) < 2e-3


def test_k_reflection_cross_check():
    # integer order via the average of the reflection formula on both sides
    avg = 0.5 * (bessel_k_reflection(1.0 - 1e-6, 1.0) + bessel_k_reflection(1.0 + 1e-6, 1.0))
    assert _rel(bessel_k(1.0, 1.0), avg) < 1e-8
    assert _rel(bessel_k(0.3, 1.5), bessel_k_reflection(0.3, 1.5)) < 1e-12


@pytest.mark.parametrize("nu", [0.0, 0.5, 2.0, 4.4, 6.0, 10.0])
def test_branches_agree_at_crossover(nu):
    x = crossover(nu)
    assert _rel(bessel_i_series(nu, x), bessel_i_asymptotic(nu, x)) < 1e-10


@pytest.mark.parametrize("nu,x", [(0.7, 3.0), (2.0, 40.0), (5.5, 0.2)])
def test_derivatives(nu, x):
    assert _rel(bessel_ip(nu, x), float(mpmath.besseli(nu, x, derivative=1))) < 1e-11
    assert _rel(bessel_kp(nu, x), float(mpmath.diff(
        lambda t: mpmath.besselk(nu, t), x))) < 1e-11


def test_bounds_check_on_random_points():
    rng = np.random.default_rng(7)
    nus = rng.uniform(0.0, 10.0, 10)
    xs = rng.uniform(0.01, 50.0, 10)
    rep = bessel_bounds_check(nus, xs)
    assert rep.checked >= 100
    assert rep.ok, rep.violations[:3]


@pytest.mark.parametrize("nu,x", [(-NU_MAX - 1, 1.0), (NU_MAX + 1, 1.0), (1.0, -0.5), (1.0, 800.0),
                                  (math.nan, 1.0)])
def test_domain_errors(nu, x):
    with pytest.raises(DomainError):
        bessel_i(nu, x)


def test_k_rejects_zero_argument():
    with pytest.raises(DomainError):
        bessel_k(1.0, 0.0)


@given(st.floats(0.0, 30.0), st.floats(0.05, 200.0))
def test_recurrences(nu, x):
    # I_{nu-1} - I_{nu+1} = (2 nu / x) I_nu  and  K_{nu+1} - K_{nu-1} = (2 nu / x) K_nu
    nu = nu + 1.0
    lhs = bessel_i(nu - 1, x) - bessel_i(nu + 1, x)
    rhs = 2 * nu / x * bessel_i(nu, x)
    assert abs(lhs - rhs) <= 1e-11 * (bessel_i(nu - 1, x) + abs(rhs))
    lhs = bessel_k(nu + 1, x) - bessel_k(nu - 1, x)
    rhs = 2 * nu / x * bessel_k(nu, x)
    assert abs(lhs - rhs) <= 1e-11 * (bessel_k(nu + 1, x) + abs(rhs))
