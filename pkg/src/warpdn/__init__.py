"""Singular Sturm-Liouville problems and Dirichlet-to-Neumann maps of warped cylinders.

Modules
-------
profiles   piecewise coefficient profiles with algebraic end singularities
sl_core    quasi-derivative integrator, characteristic and Weyl-Titchmarsh functions, spectra
spectral   spectral measures, Hadamard products, indicators, CAM discrepancy
geometry   fiber spectra, warped metrics, radial reduction, gauge normalisation
dn_map     DN blocks, Dirichlet solves, gauge check, conformal-factor ODE
bessel     modified Bessel functions of real order
cloak      singular-interface metrics whose DN map ignores an interior region
fit        parameter recovery from DN blocks
"""
from . import bessel, cloak, dn_map, fit, geometry, profiles, sl_core, spectral
from .kernel import BACKEND
from .errors import *  # noqa: F401,F403
from .profiles import (CoefficientProfile, constant_profile, polynomial_profile, power_profile,
                       expr_profile, piecewise)
from .sl_core import (SturmLiouvilleProblem, integrate_cauchy, fundamental_system, characteristics,
                      weyl_functions, weyl_solutions, spectra, counting_function, unit_problem)
from .spectral import (spectral_measure, herglotz_eval, hadamard_product, indicator_profile,
                       cam_discrepancy, duffin_schaeffer_check, weyl_law_ratio, m_growth_check)
from .geometry import (WarpedMetric, BoundaryData, fiber_spectrum, harmonic_pairs, radial_problem,
                       normalize_metric)
from .dn_map import (DNBlock, dn_block, dn_blocks, apply_dn, solve_dirichlet, gauge_discrepancy,
                     conformal_factor_ode)
from .bessel import bessel_i, bessel_k, bessel_bounds_check
from .cloak import CloakFamily, cloak_radial_solution, cloak_dn_block, cloak_invariance, finite_energy
from .fit import ParametricFamily, misfit, fit_parameters

__version__ = "0.1.0"
