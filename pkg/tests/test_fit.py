import json

import numpy as np
import pytest

from warpdn import fit
from warpdn.errors import ContractError

TRUTH = np.array([1.5, 0.8])


@pytest.fixture(scope="module")
def family():
    return fit.affine_h1()


@pytest.fixture(scope="module")
def targets(family):
    return fit.synthetic_targets(family, TRUTH, fit.harmonics_for(family, 6))


# ---- misfit ------------------------------------------------------------------

def test_misfit_zero_at_truth(family, targets):
    assert fit.misfit(family, TRUTH, targets) == 0.0
    assert np.all(fit.residuals(family, TRUTH, targets) == 0.0)


def test_misfit_positive_off_truth(family, targets):
    for d in ([1e-3, 0.0], [0.0, 1e-3], [-0.2, 0.3]):
        assert fit.misfit(family, TRUTH + d, targets) > 0


def test_misfit_penalty_for_inadmissible(family, targets):
    # h1 = -1 + 0 x is not positive
    mv = fit.misfit_value(family, [-1.0, 0.0], targets)
    assert not mv.admissible
    assert mv.value == fit.PENALTY


def test_gradient_vanishes_at_truth(family, targets):
    g = fit.misfit_gradient(family, TRUTH, targets)
    assert np.max(np.abs(g)) < 1e-8


def test_misfit_is_quadratic_near_truth(family, targets):
    H = fit.gauss_newton_hessian(family, TRUTH, targets)
    d = np.array([2e-4, -1e-4])
    assert fit.misfit(family, TRUTH + d, targets) == pytest.approx(0.5 * d @ H @ d, rel=1e-2)


# ---- local identifiability ------------------------------------------------------------

def test_hessian_positive_definite(family, targets):
    H = fit.gauss_newton_hessian(family, TRUTH, targets)
    w, flat = fit.flat_directions(H, 1e-6)
    assert np.all(w > 0)
    assert flat.shape[1] == 0


def test_gauge_parameter_is_flat():
    fam = fit.affine_h1_gauge()
    hp = fit.harmonics_for(fam, 6)
    tg = fit.synthetic_targets(fam, [1.5, 0.8, 0.0], hp)
    for s in (-0.5, 0.3, 0.7):
        assert fit.misfit(fam, [1.5, 0.8, s], tg) < 1e-14
    w, flat = fit.flat_directions(fit.gauss_newton_hessian(fam, [1.5, 0.8, 0.2], tg), 1e-6)
    assert flat.shape[1] == 1
    assert abs(flat[2, 0]) == pytest.approx(1.0, abs=1e-6)


def test_single_nu_leaves_h1_slope_flat():
    fam = fit.doubly_affine()
    hp = fit.harmonics_for(fam, 8, nus=[0])
    assert {p[1] for p in hp} == {0}
    tg = fit.synthetic_targets(fam, [1.0, 0.5], hp)
    assert fit.misfit(fam, [2.0, 0.5], tg) < 1e-20
    _, flat = fit.flat_directions(fit.gauss_newton_hessian(fam, [1.0, 0.5], tg), 1e-6)
    assert flat.shape[1] == 1
    assert abs(flat[0, 0]) == pytest.approx(1.0, abs=1e-6)


def test_two_nu_values_are_locally_unique():
    fam = fit.doubly_affine()
    hp = fit.harmonics_for(fam, 8, nus=[0, 1])
    tg = fit.synthetic_targets(fam, [1.0, 0.5], hp)
    w, flat = fit.flat_directions(fit.gauss_newton_hessian(fam, [1.0, 0.5], tg), 1e-6)
    assert flat.shape[1] == 0
    assert w.min() > 1e-4


def test_flat_directions_on_known_matrix():
    H = np.diag([1.0, 1e-12, 3.0])
    w, flat = fit.flat_directions(H)
    np.testing.assert_allclose(w, [1e-12, 1.0, 3.0])
    np.testing.assert_allclose(np.abs(flat[:, 0]), [0.0, 1.0, 0.0])


# ---- optimisation ------------------------------------------------------------------

def test_start_points_deterministic_and_inside(family):
    a = fit.start_points(family, 8)
    b = fit.start_points(family, 8)
    np.testing.assert_array_equal(a, b)
    assert len({tuple(p) for p in a}) == 8
    for p in a:
        assert family.in_bounds(p)
        assert not any(min(abs(t - lo), abs(t - hi)) < 0.04 * (hi - lo) for t, (lo, hi) in zip(p, family.bounds))


def test_fit_recovers_truth(family, targets):
    res = fit.fit_parameters(family, targets, config=fit.FitConfig(starts=2, maxiter=200))
    assert res.converged and res.admissible
    np.testing.assert_allclose(res.theta, TRUTH, atol=1e-4)
    assert res.at_bound == (False, False)
    assert len(res.starts) == 2
    assert np.all(np.diff(res.history) <= 0)
    json.dumps(res.to_json())


def test_fit_flags_active_bound(targets):
    fam = fit.affine_h1(((2.0, 4.0), (-0.5, 4.0)))
    res = fit.fit_parameters(fam, targets, config=fit.FitConfig(starts=1, maxiter=120))
    assert res.at_bound[0]
    assert res.theta[0] == pytest.approx(2.0, abs=1e-5)
    assert res.misfit > 0


def test_fit_rejects_underdetermined(family, targets):
    with pytest.raises(ContractError):
        fit.fit_parameters(family, targets[:3])


# ---- family descriptions ---------------------------------------------------------------

def test_family_from_json():
    fam = fit.family_from_json({"family": "affine_h1", "bounds": [[0.5, 2.0], [0.0, 1.0]]})
    assert fam.bounds == ((0.5, 2.0), (0.0, 1.0))
    assert fit.family_from_json({"family": "doubly_affine"}).dim == 2
    with pytest.raises(ContractError):
        fit.family_from_json({"family": "cubic"})


def test_gauge_family_metric():
    g = fit.affine_h1_gauge()([1.0, 1.0, 0.0])
    x = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(g.h0(x), g.h1(x))
    np.testing.assert_allclose(g.h1(x), 1.0 + x)
