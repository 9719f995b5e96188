"""Warped cylinders with singular interfaces at ``x = 1/4`` and ``x = 3/4``.

Near each interface the metric is a power of the distance ``X``, so the
zero-frequency radial equation is of Bessel (or Euler) type and its
solutions are known in closed form.  Finite energy selects the ``I``-branch,
which makes the boundary fluxes independent of the interior profile ``f``:
the DN map does not see ``[1/4, 3/4]``.

Variants (``X = x - 3/4`` on the right, ``X = 1/4 - x`` on the left):

* ``A``: ``sqrt(h) = X**-r``; ``u ~ X**nu I_nu(sqrt(mu) X)``, ``nu = (1+r)/2``.
* ``B``: ``sqrt(h) = X**r``;  ``u ~ X**-nu I_nu(sqrt(mu) X)``, ``nu = (r-1)/2``.
* ``C``: ``h0 = 1``, ``h1 = X**r``; ``u ~ X**a I_k(c X**b)``.
* ``D``: ``h0 = 1``, ``h1 = X**2``; ``u ~ X**s`` (Euler equation).

In ``A``/``B`` the interior profile is ``sqrt(h)``; in ``C``/``D`` it is ``h1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import roots_legendre

from . import sl_core
from .bessel import bessel_i, bessel_k
from .dn_map import DNBlock
from .errors import ContractError, MatchingError
from .geometry import first_eigenvalues
from .profiles import CoefficientProfile, constant_profile
from .sl_core import SturmLiouvilleProblem

__all__ = [
    "CloakFamily", "CloakSolution", "cloak_radial_solution", "cloak_dn_block", "cloak_dn_blocks",
    "cloak_invariance", "finite_energy", "EnergyResult", "LEFT", "RIGHT", "X_END",
]

LEFT, RIGHT = 0.25, 0.75
X_END = 0.25
MATCH_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class CloakFamily:
    """One of the four singular-interface metrics with interior profile ``f``."""

    variant: str
    r: float
    n: int
    interior: CoefficientProfile = field(default_factory=lambda: constant_profile(1.0, (LEFT, RIGHT)))
    fiber: str | None = None

    def __post_init__(self):
        v = self.variant.upper()
        object.__setattr__(self, "variant", v)
        if v not in "ABCD" or len(v) != 1:
            raise ContractError(f"unknown cloak variant {self.variant!r}")
        if self.n < 2:
            raise ContractError("fiber dimension n must be >= 2")
        r, n = float(self.r), self.n
        if v == "A" and not (r >= 1 and (n != 2 or r < 3)):
            raise ContractError(f"variant A needs r >= 1 (and r < 3 when n = 2); got r = {r}")
        if v == "B" and r < 1:
            raise ContractError(f"variant B needs r >= 1; got r = {r}")
        if v == "C" and not (2.0 / n <= r < 2):
            raise ContractError(f"variant C needs 2/n <= r < 2; got r = {r}")
        if v == "D" and r != 2:
            raise ContractError("variant D has the fixed exponent r = 2")
        iv = self.interior.interval
        if abs(iv[0] - LEFT) > 1e-12 or abs(iv[1] - RIGHT) > 1e-12:
            raise ContractError(f"interior profile must live on [{LEFT}, {RIGHT}], got {iv}")
        if any(s <= 0 for s in self.interior.signs):
            raise ContractError("interior profile must be positive")
        if self.fiber is None:
            object.__setattr__(self, "fiber", "sphere2" if n == 2 else f"torus({n})")

    def with_interior(self, f: CoefficientProfile) -> "CloakFamily":
        return CloakFamily(self.variant, self.r, self.n, f, self.fiber)

    def with_r(self, r: float) -> "CloakFamily":
        return CloakFamily(self.variant, r, self.n, self.interior, self.fiber)

    def eigenvalue(self, m: int) -> float:
        return first_eigenvalues(self.fiber, m + 1).entries[m][0]

    # ---- outer coefficients as functions of X ------------------------------
    def p_outer(self, X):
        """Flux weight ``p`` (``sqrt(h)`` or ``h1**(n/2)/sqrt(h0)``)."""
        X = np.asarray(X, float)
        v, r, n = self.variant, float(self.r), self.n
        if v == "A":
            return X ** -r
        if v == "B":
            return X ** r
        return X ** (n * r / 2.0)

    def energy_density(self, X, u, du, mu):
        """Integrand of the finite-energy condition on an outer piece."""
        X = np.asarray(X, float)
        v, r, n = self.variant, float(self.r), self.n
        if v in "AB":
            sh = self.p_outer(X)
            h1 = sh ** (2.0 / (n - 1))
            return (du ** 2 + mu * u ** 2 + h1 * u ** 2) * sh
        h1 = X ** r
        return (du ** 2 + u ** 2 + mu * u ** 2 / h1) * h1 ** (n / 2.0)

    def interior_problem(self, profile: CoefficientProfile | None = None) -> SturmLiouvilleProblem:
        f = self.interior if profile is None else profile
        if self.variant in "AB":
            p = r = f
        else:
            p = f ** (self.n / 2.0)
            r = f ** (self.n / 2.0 - 1.0)
        return SturmLiouvilleProblem(p, constant_profile(0.0, f.interval), r,
                                     name=f"cloak-{self.variant} interior")

    def interior_energy_density(self, f, u, du, mu):
        if self.variant in "AB":
            h1 = f ** (2.0 / (self.n - 1))
            return (du ** 2 + mu * u ** 2 + h1 * u ** 2) * f
        return (du ** 2 + u ** 2 + mu * u ** 2 / f) * f ** (self.n / 2.0)


# --------------------------------------------------------------------------
# closed-form outer solutions (value 1 at X = 1/4)
# --------------------------------------------------------------------------

class _Outer:
    """I-branch (and optionally K-branch) outer solution of one harmonic."""

    def __init__(self, fam: CloakFamily, mu: float):
        self.fam, self.mu = fam, float(mu)
        v, r, n = fam.variant, float(fam.r), fam.n
        c = math.sqrt(self.mu)
        self.c = c
        if v == "A":
            self.nu = 0.5 * (1.0 + r)
        elif v == "B":
            self.nu = 0.5 * (r - 1.0)
        elif v == "C":
            self.kap = (n * r - 2.0) / (2.0 * (2.0 - r))
            self.beta = (2.0 - r) / 2.0
            self.a = (2.0 - n * r) / 4.0
            self.cc = 2.0 * c / (2.0 - r)
        else:
            self.s = 0.5 * (-(n - 1) + math.sqrt((n - 1) ** 2 + 4.0 * self.mu))
        self.norm = self._raw(np.array([X_END]))[0][0]

    def _raw(self, X):
        """Unnormalised ``(u, du/dX)`` of the I-branch."""
        fam, c, mu = self.fam, self.c, self.mu
        v = fam.variant
        X = np.atleast_1d(np.asarray(X, float))
        if v == "A":
            nu = self.nu
            if mu == 0.0:
                return (4 * X) ** (2 * nu), 4 * 2 * nu * (4 * X) ** (2 * nu - 1)
            u = np.array([x ** nu * bessel_i(nu, c * x) for x in X])
            du = np.array([c * x ** nu * bessel_i(nu - 1.0, c * x) for x in X])
            return u, du
        if v == "B":
            nu = self.nu
            if mu == 0.0:
                return np.ones_like(X), np.zeros_like(X)
            u = np.array([x ** -nu * bessel_i(nu, c * x) for x in X])
            du = np.array([c * x ** -nu * bessel_i(nu + 1.0, c * x) for x in X])
            return u, du
        if v == "C":
            if mu == 0.0:
                return np.ones_like(X), np.zeros_like(X)
            a, b, k, cc = self.a, self.beta, self.kap, self.cc
            u = np.array([x ** a * bessel_i(k, cc * x ** b) for x in X])
            du = np.array([c * x ** (a + b - 1) * bessel_i(k + 1.0, cc * x ** b) for x in X])
            return u, du
        s = self.s
        return (4 * X) ** s, 4 * s * (4 * X) ** (s - 1) if s != 0 else np.zeros_like(X)

    def u_du(self, X):
        u, du = self._raw(X)
        return u / self.norm, du / self.norm

    def flux(self, X):
        """``p du/dX`` of the normalised I-branch."""
        _, du = self.u_du(X)
        return self.fam.p_outer(X) * du

    def end_flux(self) -> float:
        """``p du/dX`` at ``X = 1/4`` from the Bessel ratio identities."""
        fam, c, mu = self.fam, self.c, self.mu
        v, r, n = fam.variant, float(fam.r), fam.n
        if v == "A":
            if mu == 0.0:
                return 4.0 ** (1.0 + r) * (1.0 + r)
            y = c * X_END
            return 4.0 ** r * c * bessel_i(self.nu - 1.0, y) / bessel_i(self.nu, y)
        if v == "B":
            if mu == 0.0:
                return 0.0
            y = c * X_END
            return 4.0 ** -r * c * bessel_i(self.nu + 1.0, y) / bessel_i(self.nu, y)
        if v == "C":
            if mu == 0.0:
                return 0.0
            y = self.cc * X_END ** self.beta
            p = X_END ** (n * r / 2.0)
            return p * c * X_END ** (self.beta - 1.0) * bessel_i(self.kap + 1.0, y) / bessel_i(self.kap, y)
        return self.s * 4.0 ** (1 - n)

    def interface_flux(self) -> float:
        """Limit of ``p du/dX`` as ``X -> 0`` (zero unless variant ``A``)."""
        if self.fam.variant != "A":
            return 0.0
        r = float(self.fam.r)
        if self.mu == 0.0:
            return 4.0 ** (1.0 + r) * (1.0 + r)
        nu, c = self.nu, self.c
        # X**-r * c X**nu I_{nu-1}(cX) -> c (c/2)**(nu-1) / Gamma(nu), over the normalisation
        return c * (c / 2.0) ** (nu - 1.0) / math.gamma(nu) / self.norm

    def k_branch(self, X):
        """``(u, du/dX)`` of the singular branch (diagnostics only)."""
        fam, c, mu = self.fam, self.c, self.mu
        X = np.atleast_1d(np.asarray(X, float))
        if fam.variant == "A":
            if mu == 0.0:
                return np.ones_like(X), np.zeros_like(X)
            nu = self.nu
            u = np.array([x ** nu * bessel_k(nu, c * x) for x in X])
            du = np.array([-c * x ** nu * bessel_k(nu - 1.0, c * x) for x in X])
            return u, du
        if fam.variant == "B":
            r = float(fam.r)
            if mu == 0.0:
                if r == 1.0:
                    return np.log(X), 1.0 / X
                return X ** (1.0 - r), (1.0 - r) * X ** -r
            nu = self.nu
            u = np.array([x ** -nu * bessel_k(nu, c * x) for x in X])
            du = np.array([-c * x ** -nu * bessel_k(nu + 1.0, c * x) for x in X])
            return u, du
        raise ContractError("K-branch injection is implemented for variants A and B")


# --------------------------------------------------------------------------
# solutions
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CloakSolution:
    """Finite-energy solution of one harmonic.

    ``A0``/``A1`` multiply the normalised outer I-branches (left/right),
    ``B0``/``B1`` the singular branches (zero unless injected), ``D0``/``D1``
    are the interface fluxes ``(sqrt(h) u')(1/4-)`` and ``(sqrt(h) u')(3/4+)``.
    ``interior`` is the regular Neumann solution on ``[1/4, 3/4]`` (``None``
    when it vanishes identically); ``degenerate`` marks the ``m = 0`` case
    where the interior is determined only up to a constant (chosen as 0).
    """

    family: CloakFamily
    m: int
    mu: float
    psi0: float
    psi1: float
    A0: float
    A1: float
    B0: float
    B1: float
    D0: float
    D1: float
    interior: sl_core.QuasiSolution | None
    interior_const: float
    degenerate: bool
    mismatch: float
    outer: _Outer = field(repr=False)

    def flux_ends(self) -> tuple[float, float]:
        """``((sqrt(h) u')(0), (sqrt(h) u')(1))`` in the ``x`` variable."""
        e = self.outer.end_flux()
        left = -(self.A0 * e + self._k_flux(self.B0))
        right = self.A1 * e + self._k_flux(self.B1)
        return left, right

    def _k_flux(self, B: float) -> float:
        if B == 0.0:
            return 0.0
        _, du = self.outer.k_branch(np.array([X_END]))
        return B * float(self.family.p_outer(X_END) * du[0])

    def u(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, float))
        out = np.empty_like(x)
        left, right = x < LEFT, x > RIGHT
        mid = ~(left | right)
        for mask, X, A, B in ((left, LEFT - x, self.A0, self.B0), (right, x - RIGHT, self.A1, self.B1)):
            if np.any(mask):
                u, _ = self.outer.u_du(X[mask])
                val = A * u
                if B:
                    val = val + B * self.outer.k_branch(X[mask])[0]
                out[mask] = val
        if np.any(mid):
            if self.interior is None:
                out[mid] = self.interior_const
            else:
                out[mid] = [self.interior.at(xx)[0].real for xx in x[mid]]
        return out


def _interior_solve(fam: CloakFamily, mu: float, D0: float, D1: float):
    """Neumann problem ``(p u')(1/4) = D0``, ``(p u')(3/4) = D1`` at ``z = -mu``."""
    prob = fam.interior_problem()
    # flux(3/4) = c0^[1](3/4) u(1/4) + s0^[1](3/4) D0
    t10 = sl_core.integrate_cauchy(prob, -mu, LEFT, 1.0, 0.0).at(RIGHT)[1].real
    t11 = sl_core.integrate_cauchy(prob, -mu, LEFT, 0.0, 1.0).at(RIGHT)[1].real
    if abs(t10) < 1e-300:
        raise MatchingError("interior Neumann problem is resonant")
    alpha = (D1 - t11 * D0) / t10
    sol = sl_core.integrate_cauchy(prob, -mu, LEFT, alpha, D0)
    got = float(sol.at(RIGHT)[1].real)
    mismatch = abs(got - D1) / (1.0 + abs(D1))
    return sol, mismatch


def cloak_radial_solution(family: CloakFamily, m: int, psi0: float, psi1: float,
                          k_branch: tuple[float, float] = (0.0, 0.0)) -> CloakSolution:
    """Finite-energy solution of harmonic ``m`` with traces ``psi0``, ``psi1``.

    ``k_branch`` adds multiples of the singular branch on the (left, right)
    outer pieces; it exists to demonstrate that such solutions have infinite
    energy.
    """
    mu = family.eigenvalue(m)
    outer = _Outer(family, mu)
    B0, B1 = map(float, k_branch)
    A0, A1 = float(psi0), float(psi1)
    dflux = outer.interface_flux()
    # the left outer piece is mirrored: d/dx = -d/dX
    D0, D1 = -A0 * dflux, A1 * dflux
    interior, const, degenerate, mismatch = None, 0.0, False, 0.0
    if mu == 0.0:
        if abs(D0 - D1) > MATCH_RTOL * (1.0 + abs(D0) + abs(D1)):
            raise MatchingError(
                f"m = 0 interior Neumann data are inconsistent (flux {D0:g} in, {D1:g} out); "
                "a solution exists only when the interface fluxes balance")
        # constants solve the interior problem, so the trace is not fixed by the fluxes
        degenerate = True
        if D0 != 0.0:
            interior, mismatch = _interior_solve_zero(family, D0)
    elif D0 != 0.0 or D1 != 0.0:
        interior, mismatch = _interior_solve(family, mu, D0, D1)
    if mismatch > MATCH_RTOL:
        raise MatchingError(f"interface flux mismatch {mismatch:.3g} at m = {m}")
    return CloakSolution(family, m, mu, float(psi0), float(psi1), A0, A1, B0, B1, D0, D1,
                         interior, const, degenerate, mismatch, outer)


def _interior_solve_zero(fam: CloakFamily, D: float):
    """``m = 0``: ``u = c + D int 1/f`` with ``c`` making the interface jumps cancel."""
    prob = fam.interior_problem()
    base = sl_core.integrate_cauchy(prob, 0.0, LEFT, 0.0, D)
    # the I-branch traces vanish at both interfaces; the free constant is
    # chosen so that u(1/4) + u(3/4) = 0
    c = -0.5 * float(base.at(RIGHT)[0].real)
    sol = sl_core.integrate_cauchy(prob, 0.0, LEFT, c, D)
    return sol, abs(float(sol.at(RIGHT)[1].real) - D) / (1.0 + abs(D))


def cloak_dn_block(family: CloakFamily, m: int, check_interior: bool = True) -> DNBlock:
    """DN block of harmonic ``m``: fluxes of the outer pieces at ``x = 0, 1``.

    The entries come from the closed-form outer solutions only.  With
    ``check_interior`` the full solution for data ``(1, 1)`` (``(1, -1)`` for
    ``m = 0`` in variant ``A``, where fluxes must balance) is assembled, so an
    unsolvable interior matching raises.
    """
    mu = family.eigenvalue(m)
    if check_interior:
        sign = -1.0 if (mu == 0.0 and family.variant == "A") else 1.0
        cloak_radial_solution(family, m, 1.0, sign)
    sol0 = cloak_radial_solution(family, m, 1.0, 0.0) if not (mu == 0.0 and family.variant == "A") else None
    e = _Outer(family, mu).end_flux()
    # L = -(sqrt(h) u')(0) for data (1, 0); R = (sqrt(h) u')(1) for (0, 1)
    L = e if sol0 is None else -sol0.flux_ends()[0]
    R = e
    return DNBlock(m, 0, mu, 0.0, np.array([[L, 0.0], [0.0, R]]))


def cloak_dn_blocks(family: CloakFamily, count: int = 20, check_interior: bool = True) -> list[DNBlock]:
    return [cloak_dn_block(family, m, check_interior) for m in range(count)]


def cloak_invariance(family: CloakFamily, f1: CoefficientProfile, f2: CoefficientProfile,
                     count: int = 20) -> float:
    """Max entrywise DN difference between interior profiles ``f1`` and ``f2``."""
    b1 = cloak_dn_blocks(family.with_interior(f1), count)
    b2 = cloak_dn_blocks(family.with_interior(f2), count)
    return float(max(np.max(np.abs(x.entries - y.entries)) for x, y in zip(b1, b2)))


# --------------------------------------------------------------------------
# energy
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyResult:
    value: float
    finite: bool
    outer: tuple[float, float]
    interior_value: float
    tail_ratio: float


_GL_X, _GL_W = roots_legendre(16)
_PANELS = 80


def _outer_energy(sol: CloakSolution, A: float, B: float) -> tuple[float, float]:
    """Energy of one outer piece on dyadic panels towards the interface.

    Returns the value (with a geometric tail estimate) and the ratio of the
    last two panel contributions; a ratio near or above one means divergence.
    """
    if A == 0.0 and B == 0.0:
        return 0.0, 0.0
    fam, out = sol.family, sol.outer
    contrib = []
    hi = X_END
    for _ in range(_PANELS):
        lo = 0.5 * hi
        X = lo + (hi - lo) * 0.5 * (_GL_X + 1.0)
        u, du = out.u_du(X)
        u, du = A * u, A * du
        if B:
            ku, kdu = out.k_branch(X)
            u, du = u + B * ku, du + B * kdu
        dens = fam.energy_density(X, u, du, sol.mu)
        contrib.append(0.5 * (hi - lo) * float(np.dot(_GL_W, dens)))
        hi = lo
    c = np.array(contrib)
    ratio = c[-1] / c[-2] if c[-2] > 0 else (0.0 if c[-1] == 0 else math.inf)
    total = float(np.sum(c))
    if ratio < 1.0:
        total += c[-1] * ratio / (1.0 - ratio)
    return total, float(ratio)


def finite_energy(solution: CloakSolution, family: CloakFamily | None = None,
                  divergence_ratio: float = 0.98) -> EnergyResult:
    """Energy of one harmonic; ``finite`` is False when the quadrature over the
    dyadic panels at an interface does not decay."""
    fam = solution.family if family is None else family
    left, rl = _outer_energy(solution, solution.A0, solution.B0)
    right, rr = _outer_energy(solution, solution.A1, solution.B1)
    inner = 0.0
    if solution.interior is not None:
        x = solution.interior.grid
        u = solution.interior.uVals.real
        f = fam.interior(x)
        p = fam.interior_problem().p(x)
        du = solution.interior.quasiVals.real / p
        inner = float(trapezoid(fam.interior_energy_density(f, u, du, solution.mu), x))
    elif solution.interior_const:
        x = np.linspace(LEFT, RIGHT, 257)
        f = fam.interior(x)
        u = np.full_like(x, solution.interior_const)
        inner = float(trapezoid(fam.interior_energy_density(f, u, 0 * u, solution.mu), x))
    ratio = max(rl, rr)
    finite = ratio < divergence_ratio and all(map(math.isfinite, (left, right, inner)))
    value = left + right + inner if finite else math.inf
    return EnergyResult(value, finite, (left, right), inner, ratio)
