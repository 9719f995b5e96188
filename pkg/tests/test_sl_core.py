import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import chebyshev as C
from scipy.integrate import solve_ivp
from scipy.special import gamma, iv

from warpdn import kernel, sl_core
from warpdn.errors import ContractError, IntegrabilityError, PoleError, SingularityError
from warpdn.profiles import constant_profile, expr_profile, polynomial_profile, power_profile
from warpdn.sl_core import RTOL, SturmLiouvilleProblem, unit_problem


def _bessel_problem(s):
    """p = r = x**s, q = 0: solutions x**nu I_{+-nu}(c x), nu = (1 - s)/2."""
    w = power_profile(1.0, 0.0, s)
    return SturmLiouvilleProblem(w, constant_profile(0.0), w)


def _bessel_fundamentals(s, mu):
    nu, c = 0.5 * (1 - s), math.sqrt(mu)
    A0 = gamma(1 - nu) * (c / 2) ** nu
    A1 = gamma(1 + nu) / ((1 - s) * (c / 2) ** nu)
    c0 = (A0 * iv(-nu, c), A0 * c * iv(1 - nu, c))
    s0 = (A1 * iv(nu, c), A1 * c * iv(nu - 1, c))
    return c0, s0


# ---- closed-form oracles ---------------------------------------------------

@pytest.mark.parametrize("mu", [1.0, 4.0, 100.0, 1e4])
def test_unit_weyl_function(mu):
    w = sl_core.weyl_functions(unit_problem(), -mu)
    r = math.sqrt(mu)
    assert w.M.real == pytest.approx(-r / math.tanh(r), rel=1e-10)
    assert w.N.real == pytest.approx(-r / math.tanh(r), rel=1e-10)


@pytest.mark.parametrize("z", [-3.0, 2.5, 30.0 + 4.0j, -200.0])
def test_unit_characteristic(z):
    ch = sl_core.characteristics(unit_problem(), z)
    sq = np.sqrt(complex(z))
    assert abs(ch.delta - np.sin(sq) / sq) <= 1e-10 * max(1.0, abs(np.sin(sq) / sq))
    assert abs(ch.D - np.cos(sq)) <= 1e-10 * max(1.0, abs(np.cos(sq)))
    assert ch.consistency < 1e-10


def test_unit_spectra():
    k = np.arange(1, 21)
    dd = sl_core.spectra(unit_problem(), "DD", 20).eigenvalues
    np.testing.assert_allclose(dd, (k * np.pi) ** 2, rtol=1e-10)
    for kind in ("DN", "ND"):
        ev = sl_core.spectra(unit_problem(), kind, 20).eigenvalues
        np.testing.assert_allclose(ev, ((k - 0.5) * np.pi) ** 2, rtol=1e-10)


@pytest.mark.parametrize("s", [0.5, -0.5, 0.9])
@pytest.mark.parametrize("mu", [0.5, 10.0, 400.0])
def test_bessel_singular_end(s, mu):
    # default mesh meets the default 1e-8 solver tolerance; refining converges further
    prob = _bessel_problem(s)
    (c0u, c0v), (s0u, s0v) = _bessel_fundamentals(s, mu)
    for refine, rel in ((0, RTOL), (3, 1e-11)):
        ch = sl_core.characteristics(prob, -mu, refine=refine)
        assert ch.delta.real == pytest.approx(s0u, rel=rel)
        assert ch.D.real == pytest.approx(c0u, rel=rel)
        assert ch.E.real == pytest.approx(s0v, rel=rel)
        w = sl_core.weyl_functions(prob, -mu, refine=refine)
        assert w.M.real == pytest.approx(-c0u / s0u, rel=rel)


def _picard(p_inv_t, coef_t, z, alpha, beta, deg=80, iters=80):
    """Volterra iteration in a variable where the system is smooth.

    ``u' = a(t) v``, ``v' = b(t) u`` with ``a = dx/dt / p``, ``b = (q - z r) dx/dt``.
    """
    t = C.chebpts2(deg + 1)
    tt = 0.5 * (t + 1.0)
    a, b = p_inv_t(tt), coef_t(tt)
    u = np.full_like(tt, alpha, dtype=float)
    v = np.full_like(tt, beta, dtype=float)
    for _ in range(iters):
        iu = C.chebint(C.chebfit(t, a * v, deg), lbnd=-1) * 0.5
        iv_ = C.chebint(C.chebfit(t, b * u, deg), lbnd=-1) * 0.5
        u_new = alpha + C.chebval(t, iu)
        v_new = beta + C.chebval(t, iv_)
        done = max(np.max(np.abs(u_new - u)), np.max(np.abs(v_new - v))) < 1e-15
        u, v = u_new, v_new
        if done:
            break
    return u[-1], v[-1]


@pytest.mark.parametrize("z", [-2.0, 5.0])
def test_volterra_oracle_singular_p(z):
    # p = sqrt(x), q = x, r = 1 + x; x = t**2 makes the Volterra system smooth
    prob = SturmLiouvilleProblem(power_profile(1.0, 0.0, 0.5), polynomial_profile([0.0, 1.0]),
                                 polynomial_profile([1.0, 1.0]))
    for alpha, beta in ((1.0, 0.0), (0.0, 1.0), (0.3, -0.7)):
        ref = _picard(lambda t: 2.0 + 0 * t, lambda t: (t ** 2 - z * (1 + t ** 2)) * 2 * t, z, alpha, beta)
        scale = max(abs(ref[0]), abs(ref[1]))
        for refine, rel in ((0, RTOL), (3, 1e-11)):
            u, v = sl_core.integrate_cauchy(prob, z, 0.0, alpha, beta, refine=refine).at(1.0)
            # normwise: one component of (u, p u') may be small by cancellation
            assert max(abs(u - ref[0]), abs(v - ref[1])) <= rel * scale


def test_smooth_problem_vs_solve_ivp():
    p = polynomial_profile([1.0, 1.0])
    q = polynomial_profile([1.0, 0.0, 1.0])
    r = expr_profile("2+sin(x)")
    prob = SturmLiouvilleProblem(p, q, r)
    z = -7.5

    def rhs(x, y):
        return [y[1] / (1 + x), (1 + x * x - z * (2 + math.sin(x))) * y[0]]

    ref = solve_ivp(rhs, (0, 1), [0.4, 1.1], rtol=1e-13, atol=1e-14, dense_output=True)
    sol = sl_core.integrate_cauchy(prob, z, 0.0, 0.4, 1.1)
    for x in (0.1, 0.37, 0.8, 1.0):
        u, v = sol.at(x)
        ru, rv = ref.sol(x)
        assert u.real == pytest.approx(ru, rel=1e-9)
        assert v.real == pytest.approx(rv, rel=1e-9)


def test_cauchy_from_interior_point():
    prob = unit_problem()
    sol = sl_core.integrate_cauchy(prob, -4.0, 0.3, 1.0, 0.0)
    xs = np.array([0.0, 0.3, 0.75, 1.0])
    vals = np.array([sol.at(x)[0].real for x in xs])
    np.testing.assert_allclose(vals, np.cosh(2 * (xs - 0.3)), rtol=1e-11)


# ---- structural properties -------------------------------------------------

coeffs = st.lists(st.floats(0.2, 2.0), min_size=1, max_size=3)


@given(coeffs, coeffs, st.floats(-50.0, 50.0))
def test_wronskian_is_constant(cp, cr, z):
    prob = SturmLiouvilleProblem(polynomial_profile(cp), polynomial_profile([0.5]), polynomial_profile(cr))
    fs = sl_core.fundamental_system(prob, z)
    w = sl_core.wronskian_profile(fs.c0, fs.s0)
    np.testing.assert_allclose(w.real, 1.0, rtol=1e-9)


@given(coeffs, coeffs)
def test_eigenvalues_increase_and_count(cp, cr):
    prob = SturmLiouvilleProblem(polynomial_profile(cp), constant_profile(0.0), polynomial_profile(cr))
    ev = sl_core.spectra(prob, "DD", 6).eigenvalues
    assert np.all(np.diff(ev) > 0)
    mids = np.concatenate([[ev[0] - 1.0], 0.5 * (ev[1:] + ev[:-1])])
    n, _ = sl_core.counting_function(prob, "DD", mids)
    np.testing.assert_array_equal(n, np.arange(6))


@given(st.floats(0.1, 200.0))
def test_m_is_negative_below_spectrum(mu):
    # Herglotz property on the negative axis: M is real and decreasing towards -inf
    prob = _bessel_problem(0.5)
    m1 = sl_core.weyl_functions(prob, -mu).M.real
    m2 = sl_core.weyl_functions(prob, -mu * 1.1).M.real
    assert m2 < m1 < 0


def test_interior_singularity_is_integrated():
    p = power_profile(1.0, 0.5, 0.5)
    prob = SturmLiouvilleProblem(p, constant_profile(0.0), constant_profile(1.0))
    a = sl_core.characteristics(prob, -3.0)
    b = sl_core.characteristics(prob, -3.0, refine=2)
    assert a.consistency < 1e-10
    assert abs(a.delta - b.delta) < RTOL * abs(b.delta)


# ---- failures ----------------------------------------------------------------

def test_non_integrable_inverse_p():
    with pytest.raises(IntegrabilityError):
        SturmLiouvilleProblem(power_profile(1.0, 0.0, 1.0), constant_profile(0.0), constant_profile(1.0))


def test_too_strong_singularity():
    with pytest.raises(SingularityError):
        prob = SturmLiouvilleProblem(power_profile(1.0, 0.0, 0.99), constant_profile(0.0), constant_profile(1.0))
        prob.mesh(0)


def test_pole_guard_at_eigenvalue():
    with pytest.raises(PoleError):
        sl_core.weyl_functions(unit_problem(), math.pi ** 2)


def test_mismatched_intervals():
    with pytest.raises(Exception):
        SturmLiouvilleProblem(constant_profile(1.0), constant_profile(0.0), constant_profile(1.0, (0, 2)))


def test_bad_spectrum_arguments():
    with pytest.raises(ContractError):
        sl_core.spectra(unit_problem(), "XX", 3)
    with pytest.raises(ContractError):
        sl_core.spectra(unit_problem(), "DD", 0)


# ---- backends ----------------------------------------------------------------

def test_backends_agree():
    prob = SturmLiouvilleProblem(power_profile(1.0, 0.0, 0.5), polynomial_profile([0.0, 1.0]),
                                 expr_profile("1+x*x"))
    mesh = prob.mesh(2)
    zs = np.array([-1e3, -2.0, 0.0, 15.0, 3.0 + 40.0j])
    impls = kernel.backends()
    if "cython" not in impls:
        pytest.skip("compiled kernel not built")
    Ta, La, Ca = impls["cython"].transfer(*mesh.moments, zs)
    Tb, Lb, Cb = impls["python"].transfer(*mesh.moments, zs)
    Ta = Ta * np.exp(La - Lb)[:, None, None]
    np.testing.assert_allclose(Ta, Tb, rtol=1e-11, atol=1e-11 * np.abs(Tb).max())
    np.testing.assert_array_equal(Ca, Cb)
    y0 = np.array([0.2, 1.0], complex)
    for z in zs:
        Ya, La = impls["cython"].propagate(*mesh.moments, z, y0, False)
        Yb, Lb = impls["python"].propagate(*mesh.moments, z, y0, False)
        np.testing.assert_allclose(Ya * np.exp(La - Lb)[:, None], Yb, rtol=1e-11, atol=1e-12 * np.abs(Yb).max())


def test_pure_python_switch():
    code = ("import warpdn, numpy as np; from warpdn.sl_core import spectra, unit_problem; "
            "print(warpdn.BACKEND, repr(float(spectra(unit_problem(), 'DD', 3).eigenvalues[2])))")
    env = dict(os.environ, WARPDN_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, value = out.stdout.split()
    assert backend == "python"
    assert float(value) == pytest.approx(9 * math.pi ** 2, rel=1e-10)
