"""Recover warping-factor parameters from DN blocks.

A :class:`ParametricFamily` maps a parameter vector to a
:class:`~warpdn.geometry.WarpedMetric`.  The misfit is a weighted sum of
squared entrywise block differences; :func:`fit_parameters` minimises it with
a bounded Nelder-Mead simplex from several deterministic starts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from ._parallel import pmap
from .dn_map import DNBlock, dn_blocks
from .errors import ContractError, WarpDNError
from .geometry import WarpedMetric, harmonic_pairs
from .profiles import polynomial_profile

__all__ = [
    "ParametricFamily", "FitConfig", "FitResult", "MisfitValue", "misfit", "misfit_value",
    "residuals", "fit_parameters", "gauss_newton_hessian", "misfit_gradient", "flat_directions",
    "synthetic_targets", "affine_h1", "doubly_affine", "affine_h1_gauge", "FAMILIES", "family_from_json",
    "PENALTY", "harmonics_for", "start_points",
]

PENALTY = 1e6


@dataclass(frozen=True)
class ParametricFamily:
    """Box-bounded parameter vector mapped to a metric by ``generator``."""

    name: str
    bounds: tuple[tuple[float, float], ...]
    generator: Callable[[np.ndarray], WarpedMetric] = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.bounds)

    def __call__(self, theta) -> WarpedMetric:
        return self.generator(np.asarray(theta, float))

    def in_bounds(self, theta, tol: float = 0.0) -> bool:
        return all(lo - tol <= t <= hi + tol for t, (lo, hi) in zip(theta, self.bounds))


def _circle_metric(h1, h2=None, h0=None) -> WarpedMetric:
    return WarpedMetric(1, 1, h1, h2=h1 if h2 is None else h2, h0=h0, fiber1="circle", fiber2="circle")


def affine_h1(bounds=((0.25, 4.0), (-0.5, 4.0))) -> ParametricFamily:
    """``h1 = h2 = t1 + t2 x`` over a two-circle fiber."""
    def gen(t):
        return _circle_metric(polynomial_profile([t[0], t[1]]))
    return ParametricFamily("affine_h1", tuple(map(tuple, bounds)), gen)


def doubly_affine(bounds=((-0.5, 3.0), (-0.5, 3.0))) -> ParametricFamily:
    """``h1 = 1 + t1 x``, ``h2 = 1 + t2 x`` over a two-circle fiber.

    Blocks with ``nu = 0`` depend on ``h2`` only; ``t1`` enters through
    ``nu h1 / h2``.
    """
    def gen(t):
        return _circle_metric(polynomial_profile([1.0, t[0]]), polynomial_profile([1.0, t[1]]))
    return ParametricFamily("doubly_affine", tuple(map(tuple, bounds)), gen)


def affine_h1_gauge(bounds=((0.25, 4.0), (-0.5, 4.0), (-0.9, 0.9))) -> ParametricFamily:
    """``affine_h1`` pulled back by ``psi_s(x) = x + s x (1 - x)``.

    ``h0 = h1(psi_s) psi_s'**2`` and ``h1 = h2 = h1(psi_s)``; the last
    parameter moves along a gauge orbit, so the DN map does not depend on it.
    """
    def gen(t):
        a, b, s = t
        # h1(psi(x)) = a + b (1 + s) x - b s x^2, psi' = 1 + s - 2 s x
        h1 = polynomial_profile([a, b * (1.0 + s), -b * s])
        dpsi = polynomial_profile([1.0 + s, -2.0 * s])
        return _circle_metric(h1, h0=h1 * dpsi * dpsi)
    return ParametricFamily("affine_h1_gauge", tuple(map(tuple, bounds)), gen)


FAMILIES = {"affine_h1": affine_h1, "doubly_affine": doubly_affine, "affine_h1_gauge": affine_h1_gauge}


def family_from_json(obj: dict) -> ParametricFamily:
    """``{"family": name, "bounds": [[lo, hi], ...]}`` (bounds optional)."""
    name = obj.get("family")
    if name not in FAMILIES:
        raise ContractError(f"unknown family {name!r}; known: {sorted(FAMILIES)}")
    if "bounds" in obj:
        return FAMILIES[name](tuple(tuple(map(float, b)) for b in obj["bounds"]))
    return FAMILIES[name]()


# --------------------------------------------------------------------------
# misfit
# --------------------------------------------------------------------------

def _weights(targets: Sequence[DNBlock]) -> np.ndarray:
    return np.array([1.0 / (1.0 + b.mu + b.nu) ** 2 for b in targets])


def synthetic_targets(family: ParametricFamily, theta, harmonics, lam: float = 0.0) -> list[DNBlock]:
    return dn_blocks(family(theta), lam, harmonics)


def residuals(family: ParametricFamily, theta, targets: Sequence[DNBlock], lam: float = 0.0) -> np.ndarray:
    """Weighted entrywise residuals, shape ``(len(targets), 3)`` (L, T, R).

    Raises when the metric at ``theta`` is not admissible.
    """
    blocks = dn_blocks(family(theta), lam, [(b.m, b.n, b.mu, b.nu) for b in targets])
    w = np.sqrt(_weights(targets))
    out = np.empty((len(targets), 3))
    for i, (b, t) in enumerate(zip(blocks, targets)):
        d = b.entries - t.entries
        out[i] = w[i] * np.array([d[0, 0], d[0, 1], d[1, 1]])
    return out


@dataclass(frozen=True)
class MisfitValue:
    value: float
    admissible: bool
    message: str = ""


def misfit_value(family: ParametricFamily, theta, targets: Sequence[DNBlock], lam: float = 0.0) -> MisfitValue:
    """Misfit with the admissibility flag; failures return :data:`PENALTY`."""
    try:
        res = residuals(family, theta, targets, lam)
    except (WarpDNError, ValueError, ZeroDivisionError) as exc:
        return MisfitValue(PENALTY, False, str(exc))
    # the off-diagonal entry appears twice in the symmetric block
    v = float(np.sum(res[:, 0] ** 2 + 2.0 * res[:, 1] ** 2 + res[:, 2] ** 2))
    if not math.isfinite(v):
        return MisfitValue(PENALTY, False, "non-finite DN entries")
    return MisfitValue(v, True)


def misfit(family: ParametricFamily, theta, targets: Sequence[DNBlock], lam: float = 0.0) -> float:
    """Sum of weighted squared block differences (weights ``1/(1+mu+nu)**2``)."""
    return misfit_value(family, theta, targets, lam).value


# --------------------------------------------------------------------------
# optimisation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FitConfig:
    starts: int = 8
    maxiter: int = 400
    xatol: float = 1e-8
    fatol: float = 1e-18
    margin: float = 0.05
    bound_tol: float = 1e-6


@dataclass
class FitResult:
    theta: np.ndarray
    misfit: float
    iterations: int
    evaluations: int
    converged: bool
    at_bound: tuple[bool, ...]
    residuals: np.ndarray | None
    history: list[float]
    starts: list[dict]
    admissible: bool = True

    def to_json(self) -> dict:
        return {
            "theta": [float(t) for t in self.theta],
            "misfit": self.misfit,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "at_bound": list(self.at_bound),
            "admissible": self.admissible,
            "residuals": None if self.residuals is None else self.residuals.tolist(),
            "starts": self.starts,
        }


def start_points(family: ParametricFamily, count: int, margin: float = 0.05) -> np.ndarray:
    """Deterministic low-discrepancy starts inside the box (Halton, unscrambled)."""
    lo = np.array([b[0] for b in family.bounds])
    hi = np.array([b[1] for b in family.bounds])
    pad = margin * (hi - lo)
    pts = qmc.Halton(d=family.dim, scramble=False).random(count + 1)[1:]
    return lo + pad + pts * (hi - lo - 2 * pad)


def _run_start(family, targets, lam, cfg, x0):
    best = [math.inf]
    hist: list[float] = []

    def f(t):
        v = misfit(family, t, targets, lam)
        if v < best[0]:
            best[0] = v
        hist.append(best[0])
        return v

    res = minimize(f, x0, method="Nelder-Mead", bounds=family.bounds,
                   options={"maxiter": cfg.maxiter, "xatol": cfg.xatol, "fatol": cfg.fatol})
    return res, hist


def fit_parameters(family: ParametricFamily, targets: Sequence[DNBlock], lam: float = 0.0,
                   config: FitConfig | None = None) -> FitResult:
    """Multi-start bounded Nelder-Mead; non-convergence is flagged, not raised."""
    cfg = config or FitConfig()
    if family.dim > 10:
        raise ContractError("at most 10 parameters are supported")
    if len(targets) < 2 * family.dim:
        raise ContractError(f"need at least {2 * family.dim} target blocks for {family.dim} parameters")
    x0s = start_points(family, cfg.starts, cfg.margin)
    runs = pmap(lambda x0: _run_start(family, targets, lam, cfg, x0), list(x0s))
    summaries = []
    for x0, (res, hist) in zip(x0s, runs):
        summaries.append({"start": [float(v) for v in x0], "theta": [float(v) for v in res.x],
                          "misfit": float(res.fun), "iterations": int(res.nit), "converged": bool(res.success)})
    k = int(np.argmin([r.fun for r, _ in runs]))
    res, hist = runs[k]
    theta = np.asarray(res.x, float)
    at_bound = tuple(bool(min(abs(t - lo), abs(t - hi)) <= cfg.bound_tol * max(1.0, hi - lo))
                     for t, (lo, hi) in zip(theta, family.bounds))
    mv = misfit_value(family, theta, targets, lam)
    resid = residuals(family, theta, targets, lam) if mv.admissible else None
    return FitResult(theta, float(res.fun), int(res.nit), int(res.nfev), bool(res.success) and mv.admissible,
                     at_bound, resid, hist, summaries, mv.admissible)


# --------------------------------------------------------------------------
# local diagnostics
# --------------------------------------------------------------------------

def misfit_gradient(family: ParametricFamily, theta, targets, lam: float = 0.0, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the misfit (verification tool)."""
    theta = np.asarray(theta, float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        g[i] = (misfit(family, theta + e, targets, lam) - misfit(family, theta - e, targets, lam)) / (2 * step)
    return g


def gauss_newton_hessian(family: ParametricFamily, theta, targets, lam: float = 0.0,
                         step: float = 1e-5) -> np.ndarray:
    """``2 J^T J`` from a central-difference Jacobian of the weighted residuals."""
    theta = np.asarray(theta, float)
    cols = []
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        rp = residuals(family, theta + e, targets, lam)
        rm = residuals(family, theta - e, targets, lam)
        d = (rp - rm) / (2 * step)
        # count the off-diagonal entry twice, as in the misfit
        d[:, 1] *= math.sqrt(2.0)
        cols.append(d.ravel())
    J = np.column_stack(cols)
    return 2.0 * J.T @ J


def flat_directions(H: np.ndarray, rtol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of ``H`` and the eigenvectors whose eigenvalue is below ``rtol * max``."""
    w, V = np.linalg.eigh(0.5 * (H + H.T))
    scale = max(float(np.max(np.abs(w))), 1e-300)
    return w, V[:, w < rtol * scale]


def harmonics_for(family: ParametricFamily, count: int, nus: Sequence[int] | None = None):
    """First ``count`` harmonics of the family's fibers, optionally restricted to fiber-2 indices ``nus``."""
    g = family(np.array([0.5 * (lo + hi) for lo, hi in family.bounds]))
    if nus is None:
        return harmonic_pairs(g.fiber1, g.fiber2, count)
    pairs = harmonic_pairs(g.fiber1, g.fiber2, count * (max(nus) + 2) ** 2)
    out = [p for p in pairs if p[1] in set(nus)]
    return out[:count]
