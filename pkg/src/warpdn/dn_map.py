"""Dirichlet-to-Neumann map of a warped cylinder, harmonic by harmonic.

On the harmonic ``(m, n)`` the DN map is the 2x2 matrix

    [[-M, -1/delta], [-1/delta, -N]]     at  z = -mu_m,

of the radial problem with fiber-2 eigenvalue ``nu_n``.  The first row is the
outward flux ``-(sqrt(h) u')(0)``, the second ``(sqrt(h) u')(1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import sl_core
from ._parallel import pmap
from .errors import AdmissibilityError, BlowUpError, ContractError, PoleError
from .geometry import (BoundaryData, WarpedMetric, first_eigenvalues, normalize_metric,
                       radial_problem)
from .profiles import Antiderivative

__all__ = [
    "DNBlock", "dn_block", "dn_blocks", "apply_dn", "DirichletSolution", "RadialProfile",
    "solve_dirichlet", "gauge_discrepancy", "conformal_factor_ode", "ConformalProfile",
    "block_discrepancy",
]


@dataclass(frozen=True, eq=False)
class DNBlock:
    """DN map restricted to the harmonic ``Y_mn``."""

    m: int
    n: int
    mu: float
    nu: float
    entries: np.ndarray

    @property
    def L(self) -> float:
        return float(self.entries[0, 0])

    @property
    def T(self) -> float:
        return float(self.entries[0, 1])

    @property
    def R(self) -> float:
        return float(self.entries[1, 1])

    def row(self) -> tuple:
        return (self.m, self.n, self.mu, self.nu, self.L, self.T, self.R)


def _problem(metric: WarpedMetric, lam: float, nu: float) -> sl_core.SturmLiouvilleProblem:
    key = ("radial", float(lam), float(nu))
    cache = metric._cache
    if key not in cache:
        cache[key] = radial_problem(metric, lam, nu)
    return cache[key]


def _blocks_one_nu(metric: WarpedMetric, lam: float, nu: float, mus: np.ndarray) -> np.ndarray:
    prob = _problem(metric, lam, nu)
    zs = -np.asarray(mus, float)
    T, logs, _ = sl_core._transfer(prob, zs)
    out = np.empty((len(mus), 2, 2))
    for i, (t, lg) in enumerate(zip(T, logs)):
        try:
            sl_core._pole_guard(prob, zs[i], t[0, 1], float(lg))
        except PoleError as exc:
            raise AdmissibilityError(
                f"-mu = {zs[i]:g} hits the radial Dirichlet spectrum (nu = {nu:g}): {exc}") from exc
        M = -t[0, 0] / t[0, 1]
        N = -t[1, 1] / t[0, 1]
        inv_delta = math.exp(-lg) / t[0, 1] if lg < 700 else 0.0
        off = -float(np.real(inv_delta))
        out[i] = [[-float(np.real(M)), off], [off, -float(np.real(N))]]
    return out


def dn_blocks(metric: WarpedMetric, lam: float,
              harmonics: Sequence[tuple[int, int, float, float]]) -> list[DNBlock]:
    """Blocks for ``(m, n, mu, nu)`` tuples; one batched sweep per distinct ``nu``."""
    harmonics = list(harmonics)
    groups: dict[float, list[int]] = {}
    for i, h in enumerate(harmonics):
        groups.setdefault(float(h[3]), []).append(i)
    nus = list(groups)
    # build problems serially (profile algebra is not thread safe w.r.t. caches)
    for nu in nus:
        _problem(metric, lam, nu)
    results = pmap(lambda nu: _blocks_one_nu(metric, lam, nu,
                                             np.array([harmonics[i][2] for i in groups[nu]])), nus)
    out: list[DNBlock | None] = [None] * len(harmonics)
    for nu, ents in zip(nus, results):
        for i, e in zip(groups[nu], ents):
            m, n, mu, nv = harmonics[i]
            out[i] = DNBlock(int(m), int(n), float(mu), float(nv), e)
    return out  # type: ignore[return-value]


def dn_block(metric: WarpedMetric, lam: float, m: int, n: int = 0) -> DNBlock:
    """Block of the harmonic built from the ``m``-th and ``n``-th distinct fiber eigenvalues."""
    mu = first_eigenvalues(metric.fiber1, m + 1).entries[m][0]
    nu = first_eigenvalues(metric.fiber2, n + 1).entries[n][0] if metric.n2 else 0.0
    if not metric.n2 and n != 0:
        raise ContractError("metric has no second fiber; n must be 0")
    return dn_blocks(metric, lam, [(m, n, mu, nu)])[0]


def block_discrepancy(a: Sequence[DNBlock], b: Sequence[DNBlock]) -> float:
    """Largest entrywise difference between two block lists."""
    return float(max(np.max(np.abs(x.entries - y.entries)) for x, y in zip(a, b)))


# --------------------------------------------------------------------------
# DN map on boundary data
# --------------------------------------------------------------------------

def _min_order(metric: WarpedMetric) -> tuple[float, float]:
    """Required Sobolev order of the data and the order lost by the map."""
    if metric.regularity == "boundedElliptic":
        return 0.5, 1.0
    return 2.0, 2.0


def _select(data: BoundaryData, cutoff: float):
    keep = data.mu + data.nu <= cutoff
    w = (1.0 + data.mu + data.nu) ** data.sobolevOrder
    tail = float(np.sum((w * (data.psi0 ** 2 + data.psi1 ** 2))[~keep]))
    return keep, tail


def apply_dn(metric: WarpedMetric, lam: float, data: BoundaryData, cutoff: float) -> BoundaryData:
    """Neumann data ``(-(sqrt(h) u')(0), (sqrt(h) u')(1))`` of the Dirichlet solution.

    Harmonics with ``mu + nu > cutoff`` are not propagated; their Sobolev
    mass is reported as ``tail_mass`` of the result.
    """
    need, loss = _min_order(metric)
    if data.sobolevOrder < need:
        raise ContractError(
            f"{metric.regularity} metrics need data of Sobolev order >= {need:g} (got {data.sobolevOrder:g})")
    data.certificate()
    keep, tail = _select(data, cutoff)
    idx = np.nonzero(keep)[0]
    harm = [(data.harmonics[i][0], data.harmonics[i][1], data.mu[i], data.nu[i]) for i in idx]
    blocks = dn_blocks(metric, lam, harm) if harm else []
    out0 = np.empty(len(idx))
    out1 = np.empty(len(idx))
    for j, (i, blk) in enumerate(zip(idx, blocks)):
        out0[j], out1[j] = blk.entries @ np.array([data.psi0[i], data.psi1[i]])
    return BoundaryData(tuple(data.harmonics[i] for i in idx), data.mu[idx], data.nu[idx],
                        out0, out1, data.sobolevOrder - loss, tail)


@dataclass(frozen=True, eq=False)
class RadialProfile:
    m: int
    n: int
    mu: float
    nu: float
    x: np.ndarray
    u: np.ndarray
    flux: np.ndarray


@dataclass(frozen=True, eq=False)
class DirichletSolution:
    """Separated Dirichlet solution ``u = sum u_mn(x) Y_mn`` over a truncation."""

    profiles: tuple[RadialProfile, ...]
    cutoff: float
    energy: float
    tail_mass: float

    def traces(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([p.u[0] for p in self.profiles]), np.array([p.u[-1] for p in self.profiles]))


def _radial_solution(metric, lam, m, n, mu, nu, psi0, psi1) -> RadialProfile:
    prob = _problem(metric, lam, nu)
    try:
        Psi, Phi = sl_core.weyl_solutions(prob, -mu)
    except PoleError as exc:
        raise AdmissibilityError(f"-mu = {-mu:g} is a radial Dirichlet eigenvalue (nu = {nu:g})") from exc
    u = psi1 * Phi.uVals.real + psi0 * Psi.uVals.real
    flux = psi1 * Phi.quasiVals.real + psi0 * Psi.quasiVals.real
    return RadialProfile(m, n, mu, nu, Phi.grid.copy(), u, flux)


def solve_dirichlet(metric: WarpedMetric, lam: float, data: BoundaryData, cutoff: float) -> DirichletSolution:
    """``u_mn = psi1 Phi + psi0 Psi`` on each harmonic with ``mu + nu <= cutoff``.

    ``energy`` is the Dirichlet form ``int |grad u|^2 - lam |u|^2`` summed over
    the truncation, evaluated from boundary fluxes (Green's identity).
    """
    need, _ = _min_order(metric)
    if data.sobolevOrder < need:
        raise ContractError(
            f"{metric.regularity} metrics need data of Sobolev order >= {need:g} (got {data.sobolevOrder:g})")
    data.certificate()
    keep, tail = _select(data, cutoff)
    idx = list(np.nonzero(keep)[0])
    for i in idx:
        _problem(metric, lam, float(data.nu[i]))
    profs = pmap(lambda i: _radial_solution(metric, lam, data.harmonics[i][0], data.harmonics[i][1],
                                            float(data.mu[i]), float(data.nu[i]),
                                            float(data.psi0[i]), float(data.psi1[i])), idx)
    energy = float(sum(p.u[-1] * p.flux[-1] - p.u[0] * p.flux[0] for p in profs))
    return DirichletSolution(tuple(profs), float(cutoff), energy, tail)


# --------------------------------------------------------------------------
# gauge invariance
# --------------------------------------------------------------------------

def gauge_discrepancy(metric: WarpedMetric, lam: float = 0.0, count: int = 10) -> float:
    """Max entrywise DN difference between ``metric`` and its normalisation.

    Both sides are solved independently: the original with the extended
    radial coefficients, the normalised one on ``[0, A]``.
    """
    norm, _ = normalize_metric(metric)
    harm = metric.harmonics(count)
    return block_discrepancy(dn_blocks(metric, lam, harm), dn_blocks(norm, lam, harm))


# --------------------------------------------------------------------------
# conformal factor ODE
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConformalProfile:
    x: np.ndarray
    kappa: np.ndarray
    nu: np.ndarray
    s: np.ndarray


_GL2_C = np.array([0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6])
_GL2_A = np.array([[0.25, 0.25 - math.sqrt(3) / 6], [0.25 + math.sqrt(3) / 6, 0.25]])
_GL2_B = np.array([0.5, 0.5])


def conformal_factor_ode(metric: WarpedMetric, lam: float, kappa0: float, nu0: float,
                         cells: int = 256) -> ConformalProfile:
    """Solve ``-(sqrt(h) k')' + lam (k**(4/(n1+n2-1)+1) - k) sqrt(h) h1 = 0``.

    State ``(k, v = sqrt(h) k')`` from ``(kappa0, nu0)`` at the left end.  The
    equation is integrated in ``s = int dx/sqrt(h)``, where it reads
    ``k'' = lam f(k) h h1``; the s-mesh contains the images of all profile
    breakpoints and each cell takes one two-stage Gauss-Legendre step
    (order 4), so ``lam = 0`` is solved exactly.
    """
    if kappa0 <= 0:
        raise BlowUpError("initial conformal factor must be positive")
    expo = 4.0 / (metric.n1 + metric.n2 - 1) + 1.0
    S = Antiderivative(metric.sqrt_h.reciprocal())
    a, b = metric.interval
    bps = np.union1d(metric.h1.breakpoints, metric.h2.breakpoints)
    s_nodes = np.union1d(np.linspace(0.0, S.total, cells + 1), S(bps))
    s_nodes = s_nodes[np.concatenate([[True], np.diff(s_nodes) > 1e-14 * S.total])]
    hs = np.diff(s_nodes)
    stages = s_nodes[:-1, None] + hs[:, None] * _GL2_C[None, :]
    xs_stage = S.inverse(stages.ravel()).reshape(stages.shape)
    w = (metric.h(xs_stage.ravel()) * metric.h1(xs_stage.ravel())).reshape(stages.shape)
    kap = np.empty(s_nodes.size)
    vel = np.empty(s_nodes.size)
    kap[0], vel[0] = kappa0, nu0
    x_nodes = S.inverse(s_nodes)

    def f(k):
        return k ** expo - k

    def fp(k):
        return expo * k ** (expo - 1.0) - 1.0

    k, v = float(kappa0), float(nu0)
    for i, h in enumerate(hs):
        wi = w[i]
        # stage unknowns K_j = k + h sum a_jl V_l, V_j = v + h sum a_jl lam f(K_l) w_l
        K = np.full(2, k)
        for _ in range(50):
            V = v + h * _GL2_A @ (lam * f(K) * wi)
            G = K - k - h * _GL2_A @ V
            if np.max(np.abs(G)) <= 1e-15 * max(1.0, np.max(np.abs(K))):
                break
            # Jacobian of G with respect to K
            J = np.eye(2) - h * h * _GL2_A @ _GL2_A * (lam * fp(K) * wi)[None, :]
            K = K - np.linalg.solve(J, G)
            if not np.all(np.isfinite(K)) or np.any(K <= 0):
                raise BlowUpError(f"conformal factor left (0, inf) near x = {x_nodes[i]:.6g}")
        V = v + h * _GL2_A @ (lam * f(K) * wi)
        k = k + h * float(_GL2_B @ V)
        v = v + h * float(_GL2_B @ (lam * f(K) * wi))
        if not (math.isfinite(k) and math.isfinite(v)) or k <= 0 or k > 1e100:
            raise BlowUpError(f"conformal factor left (0, inf) near x = {x_nodes[i + 1]:.6g}")
        kap[i + 1], vel[i + 1] = k, v
    return ConformalProfile(x_nodes, kap, vel, s_nodes)
