"""One test per acceptance criterion; each records a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from warpdn import dn_map, fit, sl_core, spectral
from warpdn.bessel import bessel_bounds_check, bessel_i, bessel_i_series, bessel_k
from warpdn.cloak import LEFT, RIGHT, CloakFamily, cloak_dn_block, cloak_dn_blocks, cloak_invariance
from warpdn.geometry import BoundaryData, WarpedMetric, normalize_metric, radial_problem
from warpdn.profiles import constant_profile, expr_profile, polynomial_profile, power_profile
from warpdn.sl_core import SturmLiouvilleProblem, unit_problem


def _circle_metric(h1, h0=None, regularity="boundedElliptic"):
    return WarpedMetric(1, 1, h1, h1, h0, regularity, "circle", "circle")


def _sqrt_h_problem():
    # h = (1+x)^2, p = r = sqrt(h)
    s = polynomial_profile([1.0, 1.0])
    return SturmLiouvilleProblem(s, constant_profile(0.0), s)


def _rel(a, b):
    return abs(a - b) / abs(b)


def test_01_weyl_titchmarsh_closed_form(criterion):
    t0 = time.perf_counter()
    errs = []
    for mu in (1.0, 4.0, 100.0, 1e4):
        M = sl_core.weyl_functions(unit_problem(), -mu).M
        r = math.sqrt(mu)
        errs.append(_rel(complex(M).real, -r / math.tanh(r)))
    dt = time.perf_counter() - t0
    ok = max(errs) <= 1e-8 and dt < 1.0
    criterion(1, ok, f"max rel err {max(errs):.2e} (<= 1e-8), {dt:.2f} s (< 1 s)")
    assert ok


def test_02_spectrum_oracle(criterion):
    t0 = time.perf_counter()
    k = np.arange(1, 21)
    dd = sl_core.spectra(unit_problem(), "DD", 20).eigenvalues
    e_dd = np.max(np.abs(dd / (k * np.pi) ** 2 - 1))
    e_mix = 0.0
    for kind in ("DN", "ND"):
        ev = sl_core.spectra(unit_problem(), kind, 20).eigenvalues
        e_mix = max(e_mix, np.max(np.abs(ev / ((k - 0.5) * np.pi) ** 2 - 1)))
    dt = time.perf_counter() - t0
    ok = e_dd <= 1e-8 and e_mix <= 1e-8 and dt < 5.0
    criterion(2, ok, f"DD {e_dd:.1e}, mixed {e_mix:.1e} (<= 1e-8), {dt:.2f} s (< 5 s)")
    assert ok


def test_03_weyl_law(criterion):
    prob = _sqrt_h_problem()
    pi2 = math.pi ** 2
    spec = {kind: sl_core.spectra(prob, kind, 50) for kind in ("DD", "DN", "ND")}
    raw = {kind: s.eigenvalues[49] / 50 ** 2 for kind, s in spec.items()}
    lim = {kind: spectral.weyl_law_ratio(s).limit for kind, s in spec.items()}
    e_raw = abs(raw["DD"] / pi2 - 1)
    # mixed spectra sit near ((k - 1/2) pi)^2, so compare their extrapolated limits
    e_same = max(abs(lim[k] / lim["DD"] - 1) for k in ("DN", "ND"))
    ok = e_raw <= 0.02 and e_same <= 0.02
    criterion(3, ok, f"alpha_50/50^2 = {raw['DD']:.5f} ({e_raw:.1e} from pi^2, <= 2%); "
                     f"beta/gamma limits within {e_same:.1e} of alpha's (<= 2%)")
    assert ok


def test_04_hadamard_product(criterion):
    val = spectral.hadamard_product(unit_problem(), 10_000, -1.0)
    err = _rel(complex(val).real, math.sinh(1.0))
    ok = err <= 1e-3
    criterion(4, ok, f"rel err {err:.2e} (<= 1e-3)")
    assert ok


@pytest.mark.xfail(strict=True, reason="log|Delta(-t^2)|/t at t=50 is 0.908 for the unit problem; "
                                       "the 5% band around 1 is reached only for t > ~107")
def test_05_indicator_at_t50(criterion):
    vals = {}
    for name, prob in (("unit", unit_problem()), ("sqrt_h", _sqrt_h_problem())):
        vals[name] = float(spectral.indicator_profile(prob, "delta", math.pi / 2, [50.0]).values[0])
    exact = math.log(math.sinh(50.0) / 50.0) / 50.0
    ok = all(abs(v - 1.0) <= 0.05 for v in vals.values())
    criterion(5, ok, f"unit {vals['unit']:.4f} (closed form {exact:.4f}), sqrt_h {vals['sqrt_h']:.4f}; "
                     f"target 1 +- 5% [known shortfall, xfail]")
    assert ok


def test_06_spectral_measure(criterion):
    meas = spectral.spectral_measure(unit_problem(), 2000)
    err_M = abs(spectral.herglotz_eval(meas, -1.0).real + 1.0 / math.tanh(1.0))
    # residue of M at alpha_1 from the solver, away from the measure routine
    a1 = meas.alphas[0]
    z = a1 - 1e-5
    w1 = complex(sl_core.weyl_functions(unit_problem(), z).M).real * (a1 - z)
    err_w = _rel(w1, 2 * math.pi ** 2)
    ok = err_M <= 1e-3 and err_w <= 1e-2
    criterion(6, ok, f"|M_sum(-1) - M(-1)| = {err_M:.2e} (<= 1e-3), residue rel err {err_w:.2e} (<= 1%)")
    assert ok


def test_07_dn_block_closed_form(criterion):
    blk = dn_map.dn_block(_circle_metric(constant_profile(1.0)), 0.0, 1)
    want = np.array([[1.31304, -0.85092], [-0.85092, 1.31304]])
    err = float(np.max(np.abs(blk.entries - want)))
    ok = blk.mu == 1.0 and err <= 1e-5
    criterion(7, ok, f"max entry err {err:.2e} (<= 1e-5)")
    assert ok


def test_08_gauge_invariance(criterion):
    t0 = time.perf_counter()
    metric = _circle_metric(polynomial_profile([1.0, 2.0, 1.0]), h0=constant_profile(1.0))
    d = dn_map.gauge_discrepancy(metric, 0.0, 10)
    dt = time.perf_counter() - t0
    ok = d <= 1e-6 and dt < 30.0
    criterion(8, ok, f"discrepancy {d:.2e} (<= 1e-6), {dt:.2f} s (< 30 s)")
    assert ok


def test_09_cam_discrepancy(criterion):
    h1 = polynomial_profile([1.0, 2.0, 1.0])
    metric = _circle_metric(h1, h0=constant_profile(1.0))
    a, b = radial_problem(metric), radial_problem(normalize_metric(metric)[0])
    ts = np.linspace(0.2, 10.0, 50)
    d_eq = spectral.cam_discrepancy(a, b, ts)
    shifted = SturmLiouvilleProblem(constant_profile(1.0), constant_profile(1.0), constant_profile(1.0))
    d_pert = spectral.cam_discrepancy(unit_problem(), shifted, ts)
    ok = d_eq <= 1e-6 and d_pert >= 1e-2
    criterion(9, ok, f"gauge pair {d_eq:.2e} (<= 1e-6), perturbed pair {d_pert:.2e} (>= 1e-2)")
    assert ok


def test_10_conformal_rigidity(criterion):
    metric = _circle_metric(polynomial_profile([1.0, 2.0, 1.0]))
    dev = max(float(np.max(np.abs(dn_map.conformal_factor_ode(metric, lam, 1.0, 0.0).kappa - 1.0)))
              for lam in (0.0, 1.0, 5.0))
    ok = dev <= 1e-8
    criterion(10, ok, f"max |kappa - 1| = {dev:.1e} (<= 1e-8)")
    assert ok


def test_11_cloaking(criterion):
    fam = CloakFamily("A", 1.0, 2)
    f1 = constant_profile(1.0, (LEFT, RIGHT))
    f2 = expr_profile("2 + sin(2*pi*x)", (LEFT, RIGHT))
    inv = cloak_invariance(fam, f1, f2, count=20)
    R0 = cloak_dn_block(fam, 0).R
    b1, b2 = cloak_dn_blocks(fam, 20), cloak_dn_blocks(fam.with_r(1.1), 20)
    pert = max(float(np.max(np.abs(x.entries - y.entries))) for x, y in zip(b1, b2))
    ok = inv <= 1e-10 and abs(R0 - 32.0) <= 1e-8 and pert > 1e-2
    criterion(11, ok, f"interior change {inv:.1e} (<= 1e-10), m=0 R = {R0:.12g} (32 +- 1e-8), "
                      f"outside change {pert:.2e} (> 1e-2)")
    assert ok


def test_12_estimate_suite(criterion):
    rng = np.random.default_rng(20261016)
    n_metrics, per_metric = 20, 10
    worst_phi, worst_u, sup_spread, checked = 0.0, -math.inf, 0.0, 0
    phi_ok = u_ok = sup_ok = True
    for _ in range(n_metrics):
        s, c = rng.uniform(0.1, 0.9), rng.uniform(-0.6, 0.6)
        metric = _circle_metric(power_profile(1.0, 0.0, s) + polynomial_profile([1.0, c]), regularity="criticalL1")
        harm = metric.harmonics(40)
        for i in rng.choice(len(harm), per_metric, replace=False):
            _, _, mu, nu = harm[i]
            _, phi = sl_core.weyl_solutions(radial_problem(metric, 0.0, nu), -mu)
            v = phi.uVals.real
            low, step = -min(0.0, v.min()), -min(0.0, np.diff(v).min())
            worst_phi = max(worst_phi, low, v.max() - 1.0, step)
            phi_ok &= low <= 1e-14 and v.max() <= 1.0 + 1e-12 and step <= 1e-14
            a0, a1 = rng.uniform(-1.0, 1.0, 2)
            data = BoundaryData.from_pairs([harm[i]], [a0], [a1], 2.0)
            u = dn_map.solve_dirichlet(metric, 0.0, data, math.inf).profiles[0].u
            excess = float(np.max(np.abs(u))) - (abs(a0) + abs(a1))
            worst_u = max(worst_u, excess)
            u_ok &= excess <= 1e-12
            checked += 1
        # 1/|Delta(-mu_m)| = |T|: finite, with the same sup for growing cutoffs
        sups = [max(abs(b.T) for b in dn_map.dn_blocks(metric, 0.0, metric.harmonics(cut))) for cut in (10, 20, 40)]
        spread = (max(sups) - min(sups)) / max(sups)
        sup_spread = max(sup_spread, spread)
        sup_ok &= all(math.isfinite(x) for x in sups) and spread <= 1e-12
    ok = checked == 200 and phi_ok and u_ok and sup_ok
    criterion(12, ok, f"{checked} samples: Phi violation {worst_phi:.1e}, max(|u| - |psi0| - |psi1|) "
                      f"{worst_u:.1e}, sup 1/|Delta| spread over cutoffs {sup_spread:.1e}")
    assert ok


def test_13_bessel(criterion):
    err = 0.0
    for x in (0.01, 0.5, 3.0, 25.0, 100.0):
        c = math.sqrt(2.0 / (math.pi * x))
        err = max(err, _rel(bessel_i(0.5, x), c * math.sinh(x)),
                  _rel(bessel_i_series(-0.5, x), c * math.cosh(x)),
                  _rel(bessel_k(0.5, x), math.sqrt(math.pi / (2 * x)) * math.exp(-x)))
    rng = np.random.default_rng(13)
    rep = bessel_bounds_check(rng.uniform(0.0, 10.0, 10), rng.uniform(0.01, 50.0, 10))
    ok = err <= 1e-10 and rep.ok and rep.checked >= 100
    criterion(13, ok, f"half-integer rel err {err:.1e} (<= 1e-10), inequalities on {rep.checked} points: "
                      f"{len(rep.violations)} violations")
    assert ok


def test_14_inverse_fit(criterion):
    t0 = time.perf_counter()
    fam = fit.affine_h1()
    truth = np.array([1.5, 0.8])
    targets = fit.synthetic_targets(fam, truth, fit.harmonics_for(fam, 20))
    res = fit.fit_parameters(fam, targets, config=fit.FitConfig(starts=8))
    err = float(np.max(np.abs(res.theta - truth)))
    # doubly warped: nu = 0 blocks alone leave the h1 slope undetermined
    dw = fit.doubly_affine()
    point = np.array([1.0, 0.5])
    n_flat = []
    for nus in ([0], [0, 1]):
        tg = fit.synthetic_targets(dw, point, fit.harmonics_for(dw, 10, nus))
        n_flat.append(fit.flat_directions(fit.gauss_newton_hessian(dw, point, tg), 1e-6)[1].shape[1])
    dt = time.perf_counter() - t0
    ok = err <= 1e-3 and res.converged and n_flat == [1, 0] and dt < 300.0
    criterion(14, ok, f"max param err {err:.1e} (<= 1e-3); flat directions single-nu {n_flat[0]}, "
                      f"two-nu {n_flat[1]}; {dt:.0f} s (< 300 s)")
    assert ok
