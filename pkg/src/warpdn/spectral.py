"""Spectral measures, Herglotz sums, Hadamard products, indicators and CAM checks.

Everything here is built on :mod:`warpdn.sl_core`.  Large ``|z|`` values are
handled as ``mantissa * exp(log_scale)`` throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError
from .sl_core import (SpectrumResult, SturmLiouvilleProblem, _transfer, characteristics,
                      characteristics_batch, spectra, weyl_functions, weyl_functions_batch)

__all__ = [
    "SpectralMeasure", "IndicatorSamples", "MGrowth", "WeylLaw", "spectral_measure",
    "herglotz_eval", "herglotz_tail_bound", "m_growth_check", "hadamard_product",
    "hadamard_truncation_bound", "indicator_profile", "cam_discrepancy",
    "duffin_schaeffer_check", "weyl_law_ratio",
]

#: absolute floor for discrepancies that are pure round-off
ROUNDOFF_FLOOR = 1e-12


@dataclass(frozen=True)
class SpectralMeasure:
    """Atomic measure ``sum_k w_k delta(alpha_k)`` plus the Herglotz offset ``c``."""

    alphas: np.ndarray
    weights: np.ndarray
    kMax: int
    offset: float
    weyl_length: float = 1.0
    residue_errors: np.ndarray | None = None

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.alphas.tolist(), self.weights.tolist()))

    @property
    def sigma(self) -> float:
        """Upper end of the analyticity half-line, one unit below the first atom."""
        return float(self.alphas[0] - 1.0) if self.alphas.size else math.inf

    def to_rows(self) -> list[tuple[int, float, float]]:
        return [(k + 1, float(a), float(w)) for k, (a, w) in enumerate(zip(self.alphas, self.weights))]


def _herglotz_sum(alphas, weights, z):
    z = np.asarray(z, complex)
    terms = weights[None, :] * (1.0 / (alphas[None, :] - z.reshape(-1, 1))
                                - (alphas / (1.0 + alphas ** 2))[None, :])
    # summing from the smallest terms keeps the tail from being swamped
    return terms[:, ::-1].sum(axis=1).reshape(z.shape)


def spectral_measure(problem: SturmLiouvilleProblem, kMax: int, residue_checks: int = 10,
                     refine: int = 0) -> SpectralMeasure:
    """Dirichlet spectral measure of ``M`` truncated to ``kMax`` atoms.

    Weights are the norming constants ``1 / int r s0(., alpha_k)**2``.  The
    norm is taken from the identity ``int r s0**2 = s0^[1](L) d(delta)/dz`` at
    an eigenvalue, with the ``z``-derivative obtained by a complex step, and
    for the first ``residue_checks`` atoms it is cross-checked against the
    residue ``M(z) (alpha_k - z)`` at ``z = alpha_k (1 - 1e-4)``.
    """
    spec = spectra(problem, "DD", kMax, refine=refine)
    alphas = spec.eigenvalues
    eps = 1e-20 * np.maximum(np.abs(alphas), 1.0)
    T, logs, _ = _transfer(problem, alphas + 1j * eps, refine)
    ddelta = (T[:, 0, 1] * np.exp(logs)).imag / eps
    E = (T[:, 1, 1] * np.exp(logs)).real
    norms = E * ddelta
    if np.any(norms <= 0):
        raise ContractError("non-positive eigenfunction norm: the eigenvalues are not simple")
    weights = 1.0 / norms
    nres = min(residue_checks, kMax)
    res_err = np.empty(nres)
    for k in range(nres):
        z = alphas[k] * (1.0 - 1e-4) if alphas[k] != 0 else -1e-4
        M = weyl_functions(problem, z, refine=refine, check=False).M
        res_err[k] = abs((M * (alphas[k] - z)).real - weights[k]) / weights[k]
    Mi = weyl_functions(problem, 1j, refine=refine, check=False).M
    offset = float(Mi.real - _herglotz_sum(alphas, weights, 1j).real)
    return SpectralMeasure(alphas, weights, kMax, offset, problem.weyl_length(), res_err)


def herglotz_eval(measure: SpectralMeasure, z: complex, sigma: float | None = None) -> complex:
    """``c + sum_k w_k [1/(alpha_k - z) - alpha_k/(1 + alpha_k**2)]``.

    Raises :class:`ContractError` for real ``z >= sigma`` (default one unit
    below the first atom), where the series represents nothing analytic.
    The truncation error is bounded by :func:`herglotz_tail_bound`.
    """
    z = complex(z)
    sigma = measure.sigma if sigma is None else sigma
    if z.imag == 0 and z.real >= sigma:
        raise ContractError(f"z = {z} lies on the spectral half-line [{sigma}, inf)")
    if measure.alphas.size == 0:
        return complex(measure.offset)
    return complex(measure.offset + _herglotz_sum(measure.alphas, measure.weights, z))


def herglotz_tail_bound(measure: SpectralMeasure, z: complex) -> float:
    """Leading-order size of the dropped atoms, ``|z - i| 2 W / (pi**2 K)``.

    Uses the Weyl asymptotics ``alpha_k ~ (k pi / W)**2`` and
    ``w_k ~ 2 alpha_k / W``; it is ``O(1/K)`` as the truncation grows.
    """
    K = max(measure.kMax, 1)
    return abs(complex(z) - 1j) * 2.0 * measure.weyl_length / (math.pi ** 2 * K)


@dataclass(frozen=True)
class MGrowth:
    """Linear growth constant of ``|M|`` and its log-log growth exponent.

    ``constant`` is the smallest ``C`` with ``|M(z)| <= C (1 + |z|)`` on the
    fitting grid; ``holdout_ok`` reports ``|M| <= 2 C (1 + |z|)`` on the
    holdout grid and ``max_ratio`` the largest ``|M| / (C (1 + |z|))`` there.
    """

    constant: float
    exponent: float
    holdout_ok: bool
    max_ratio: float


def m_growth_check(problem: SturmLiouvilleProblem, zGrid: Sequence[float],
                   holdout: Sequence[float] | None = None) -> MGrowth:
    """Fit the bound ``|M(z)| <= C (1 + |z|)`` on the negative axis.

    ``holdout`` defaults to the geometric midpoints of ``zGrid`` extended one
    decade beyond its most negative point.
    """
    zs = np.sort(np.asarray(zGrid, float))
    spec0 = spectra(problem, "DD", 1).eigenvalues[0]
    if np.any(zs > spec0 - 2.0):
        raise ContractError("growth grid must lie in (-inf, alpha_1 - 2]")
    M, _ = weyl_functions_batch(problem, zs)
    absM = np.abs(M)
    C = float(np.max(absM / (1.0 + np.abs(zs))))
    if not np.isfinite(C):
        raise ContractError("non-finite growth constant")
    big = np.abs(zs) >= 1.0
    if np.count_nonzero(big) >= 2:
        expo = float(np.polyfit(np.log(np.abs(zs[big])), np.log(absM[big]), 1)[0])
    else:
        expo = float("nan")
    if holdout is None:
        neg = -zs
        holdout = np.concatenate([-np.sqrt(neg[:-1] * neg[1:]), [10.0 * zs[0]]]) if zs.size > 1 else 10 * zs
    hz = np.asarray(holdout, float)
    Mh, _ = weyl_functions_batch(problem, hz)
    ratio = np.abs(Mh) / (C * (1.0 + np.abs(hz)))
    return MGrowth(C, expo, bool(np.all(ratio <= 2.0)), float(np.max(ratio)))


def hadamard_product(problem: SturmLiouvilleProblem, kMax: int, z: complex,
                     spectrum: SpectrumResult | None = None) -> complex:
    """``delta(0) prod_k (1 - z/alpha_k)`` over the first ``kMax`` Dirichlet eigenvalues."""
    spec = spectrum if spectrum is not None else spectra(problem, "DD", kMax)
    alphas = spec.eigenvalues[:kMax]
    delta0 = characteristics(problem, 0.0, check=False).delta
    z = complex(z)
    if z == 0:
        return complex(delta0)
    logs = np.log1p(-z / alphas.astype(complex))
    return complex(delta0 * np.exp(np.sum(logs[::-1])))


def hadamard_truncation_bound(problem: SturmLiouvilleProblem, kMax: int, z: complex) -> float:
    """Relative truncation error bound ``2 |z| W**2 / (pi**2 K)`` (Weyl asymptotics)."""
    W = problem.weyl_length()
    return 2.0 * abs(complex(z)) * W ** 2 / (math.pi ** 2 * max(kMax, 1))


@dataclass(frozen=True)
class IndicatorSamples:
    """Samples ``log|f(r e^{i theta})| / r`` of ``f(zeta) = F(zeta**2)``."""

    theta: float
    radii: np.ndarray
    values: np.ndarray
    which: str
    target: float
    monotone: bool

    def to_rows(self) -> list[tuple[float, float]]:
        return [(float(r), float(v)) for r, v in zip(self.radii, self.values)]


_WHICH = {"delta": 0, "Δ": 0, "Δ∘sq": 0, "D": 1, "D∘sq": 1, "E": 2, "E∘sq": 2}


def indicator_profile(problem: SturmLiouvilleProblem, which: str, theta: float,
                      radii: Sequence[float]) -> IndicatorSamples:
    """Directional growth of ``delta``, ``D`` or ``E`` composed with squaring.

    ``target`` is the limiting indicator ``W |sin theta|`` with
    ``W = int sqrt(r/p)``; ``monotone`` reports whether the distance to it is
    non-increasing along ``radii`` (expected for ``p = r`` problems).
    """
    if which not in _WHICH:
        raise ContractError(f"unknown function {which!r}; use delta, D or E")
    radii = np.asarray(radii, float)
    if np.any(np.diff(radii) <= 0) or np.any(radii <= 0):
        raise ContractError("radii must be positive and increasing")
    zs = (radii * np.exp(1j * theta)) ** 2
    mant, logs = characteristics_batch(problem, zs)
    with np.errstate(divide="ignore"):
        vals = (np.log(np.abs(mant[:, _WHICH[which]])) + logs) / radii
    if not np.all(np.isfinite(vals)):
        raise ContractError("indicator hit a zero of the function; shift theta or the radii")
    target = problem.weyl_length() * abs(math.sin(theta))
    dist = np.abs(vals - target)
    monotone = bool(np.all(np.diff(dist) <= 1e-12 * (1 + dist[:-1])))
    return IndicatorSamples(float(theta), radii, vals, which, target, monotone)


def _log_pair(problem, ts):
    mant, logs = characteristics_batch(problem, -np.asarray(ts, float) ** 2 + 0j)
    return mant[:, 1], mant[:, 0], logs


def cam_discrepancy(problemA: SturmLiouvilleProblem, problemB: SturmLiouvilleProblem,
                    zGrid: Sequence[float]) -> float:
    """``max_t |D_A delta_B - D_B delta_A|(-t**2) exp(-(W_A + W_B)|t|)``.

    The two problems may live on intervals of different length (as a pair
    related by a change of variables does); each factor is normalised by its
    own exponential type ``W = int sqrt(r/p)``, which makes the result
    scale-free.  Symmetric in the two problems by construction.
    """
    ts = np.asarray(zGrid, float)
    DA, dA, lA = _log_pair(problemA, ts)
    DB, dB, lB = _log_pair(problemB, ts)
    norm = (problemA.weyl_length() + problemB.weyl_length()) * np.abs(ts)
    scale = np.exp(lA + lB - norm)
    diff = np.abs(DA * dB - DB * dA) * scale
    return float(np.max(diff)) if diff.size else 0.0


def duffin_schaeffer_check(problemA: SturmLiouvilleProblem, problemB: SturmLiouvilleProblem,
                           base: Sequence[float], density: int = 10) -> tuple[float, float, bool]:
    """Compare the CAM discrepancy on ``base`` with a ``density``-times finer grid.

    Returns ``(coarse, fine, ok)`` with ``ok`` meaning
    ``fine <= 2 coarse + ROUNDOFF_FLOOR``: a discrepancy that vanishes on the
    coarse sequence must stay small in between.
    """
    base = np.sort(np.asarray(base, float))
    coarse = cam_discrepancy(problemA, problemB, base)
    fine_grid = np.concatenate([np.linspace(a, b, density + 1)[:-1] for a, b in zip(base[:-1], base[1:])]
                               + [base[-1:]])
    fine = cam_discrepancy(problemA, problemB, fine_grid)
    return coarse, fine, bool(fine <= 2.0 * coarse + ROUNDOFF_FLOOR)


@dataclass(frozen=True)
class WeylLaw:
    """Extrapolated limit of ``lambda_k / k**2`` and the raw last ratio."""

    limit: float
    last_ratio: float
    k_used: int
    relative_to_pi2: float


def weyl_law_ratio(spectrum: SpectrumResult, length: float = 1.0) -> WeylLaw:
    """Richardson-type limit of ``lambda_k / k**2``.

    Fits ``L + a/k + b/k**2`` by least squares on the upper half of the
    spectrum; for ``p = r`` problems on an interval of unit Weyl length the
    limit is ``pi**2``.
    """
    lam = np.asarray(spectrum.eigenvalues, float)
    K = lam.size
    if K < 20:
        raise ContractError("need at least 20 eigenvalues for a Weyl-law estimate")
    k = np.arange(1, K + 1, dtype=float)
    ratio = lam / k ** 2
    sel = k > K // 2
    A = np.stack([np.ones(sel.sum()), 1.0 / k[sel], 1.0 / k[sel] ** 2], axis=1)
    coef, *_ = np.linalg.lstsq(A, ratio[sel], rcond=None)
    limit = float(coef[0])
    pi2 = (math.pi / length) ** 2
    return WeylLaw(limit, float(ratio[-1]), int(sel.sum()), abs(limit / pi2 - 1.0))
