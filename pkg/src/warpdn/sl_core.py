"""Sturm-Liouville engine for ``-(p u')' + q u = z r u`` with L^1 coefficients.

The equation is integrated in quasi-derivative form ``Y = (u, p u')``,

    u' = v / p,        v' = (q - z r) u,

on a mesh that is graded towards algebraic end singularities of the
coefficients.  Each cell is advanced with a fourth-order Magnus step built
from exact (Gauss-Jacobi) moments of ``1/p``, ``q`` and ``r``; the step is
exact whenever the coefficients are constant on a cell, for every ``z``.
All magnitudes are carried as mantissa and log scale, so ``|z|`` in the
millions costs nothing in range.

Eigenvalues are located by Sturm oscillation counts (zeros of the shooting
solution inside each cell are counted exactly from the step's closed form),
isolated by batched bisection and polished by the Illinois method on the
relevant characteristic function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import kernel
from .errors import (BracketingError, ContractError, IntegrabilityError, PoleError,
                     ProfileError, SingularityError)
from .profiles import (CoefficientProfile, Segment, cell_moments, constant_profile,
                       exponent_at, grading_exponent, is_singular_exponent, mesh_nodes, standoff)

__all__ = [
    "SturmLiouvilleProblem", "QuasiSolution", "FundamentalSystem", "SpectrumResult",
    "Characteristics", "WeylFunctions", "unit_problem", "constant_problem",
    "integrate_cauchy", "fundamental_system", "wronskian", "characteristics",
    "characteristics_batch", "weyl_functions", "weyl_solutions", "spectra",
    "growth_constant", "counting_function",
]

RTOL = 1e-8
EIG_RESIDUAL = 1e-10
POLE_THRESHOLD = 1e-10
MAX_LEVEL = 7
CELLS_PER_UNIT = 128
#: largest per-cell phase ``sqrt(|z| * P0 * R0)`` tolerated before refining
PHASE_TARGET = 0.25
Z_GROWTH_SCALE = 2.0
#: end exponents closer to -1 than this leave no representable graded cell
SINGULAR_MARGIN = 0.02

KIND_ALIASES = {
    "DD": "DD", "dirichlet": "DD", "dirichlet-dirichlet": "DD", "alpha": "DD",
    "ND": "ND", "neumann-dirichlet": "ND", "beta": "ND",
    "DN": "DN", "dirichlet-neumann": "DN", "gamma": "DN",
}


# --------------------------------------------------------------------------
# problem and mesh
# --------------------------------------------------------------------------

@dataclass
class _Subinterval:
    a: float
    b: float
    segs: tuple            # (1/p, q, r) segments restricted to [a, b]
    e_left: tuple
    e_right: tuple
    first: int = 0         # index of first cell
    count: int = 0


@dataclass
class Mesh:
    """Cell nodes and Magnus moments for one refinement level."""

    nodes: np.ndarray
    moments: tuple
    cell_sub: np.ndarray
    subs: list
    level: int

    @property
    def ncells(self) -> int:
        return self.nodes.size - 1

    def phase(self) -> float:
        P0, _, Q0, _, R0, _ = self.moments
        return float(np.max(np.sqrt(np.abs(P0) * R0))) if self.ncells else 0.0


@dataclass(frozen=True, eq=False)
class SturmLiouvilleProblem:
    """Coefficient triple on a common interval ``[a, b]`` with ``1/p, q, r`` in L^1."""

    p: CoefficientProfile
    q: CoefficientProfile
    r: CoefficientProfile
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        ivs = {self.p.interval, self.q.interval, self.r.interval}
        a, b = self.p.interval
        for iv in ivs:
            if abs(iv[0] - a) > 1e-12 * max(1, abs(b)) or abs(iv[1] - b) > 1e-12 * max(1, abs(b)):
                raise ProfileError(f"coefficients live on different intervals: {sorted(ivs)}")
        if any(s == 0 for s in self.p.signs):
            raise ProfileError("p must be nonzero on every segment")
        if any(s <= 0 for s in self.r.signs):
            raise ProfileError("r must be positive on every segment")
        inv_p = self.p.reciprocal()
        self._cache["inv_p"] = inv_p
        m_p = inv_p.l1_certificate("1/p")
        self.q.l1_certificate("q")
        m_r = self.r.l1_certificate("r")
        self._cache["growthA"] = 0.5 * (m_p + m_r)

    # ---- basic data ---------------------------------------------------------
    @property
    def interval(self) -> tuple[float, float]:
        return self.p.interval

    @property
    def length(self) -> float:
        return self.p.length

    @property
    def growthA(self) -> float:
        return self._cache["growthA"]

    @property
    def inv_p(self) -> CoefficientProfile:
        return self._cache["inv_p"]

    @property
    def positive(self) -> bool:
        return all(s > 0 for s in self.p.signs)

    def weyl_length(self) -> float:
        """``int sqrt(r / p)``, the Weyl-law length of the problem."""
        if "weyl" not in self._cache:
            self._cache["weyl"] = (self.r * self.inv_p).__pow__(0.5).integral()
        return self._cache["weyl"]

    # ---- discretisation -------------------------------------------------------
    def _subintervals(self, extra: tuple = ()) -> list[_Subinterval]:
        key = ("subs", extra)
        if key in self._cache:
            return self._cache[key]
        pts = set(self.p.breakpoints) | set(self.q.breakpoints) | set(self.r.breakpoints)
        for prof in (self.p, self.q, self.r):
            for seg in prof.segments:
                if seg.kind == "table":
                    pts.update(x for x in seg.params["x"] if seg.span[0] < x < seg.span[1])
        pts.update(extra)
        a, b = self.interval
        pts = np.array(sorted(x for x in pts if a <= x <= b))
        pts = pts[np.concatenate([[True], np.diff(pts) > 1e-14 * max(1.0, abs(b))])]
        profs = [self.inv_p.split(pts), self.q.split(pts), self.r.split(pts)]
        subs = []
        for lo, hi in zip(pts[:-1], pts[1:]):
            segs = []
            for prof in profs:
                mid = 0.5 * (lo + hi)
                idx = int(prof.segment_index(np.array([mid]))[0])
                segs.append(prof.segments[idx].with_span(lo, hi))
            el = tuple(exponent_at(s, lo) for s in segs)
            er = tuple(exponent_at(s, hi) for s in segs)
            for e in el + er:
                if e <= -1:
                    raise IntegrabilityError(f"coefficient exponent {e:g} is not integrable near [{lo}, {hi}]")
                if e < -1 + SINGULAR_MARGIN:
                    raise SingularityError(
                        f"singularity too strong (exponent {e:g}) near [{lo:g}, {hi:g}]: "
                        "graded steps would underflow")
            subs.append(_Subinterval(float(lo), float(hi), tuple(segs), el, er))
        self._cache[key] = subs
        return subs

    def mesh(self, level: int = 0, extra: Sequence[float] = ()) -> Mesh:
        extra = tuple(sorted(float(x) for x in extra))
        key = ("mesh", level, extra)
        if key in self._cache:
            return self._cache[key]
        subs = [_Subinterval(s.a, s.b, s.segs, s.e_left, s.e_right) for s in self._subintervals(extra)]
        nodes_all, moms, owner = [], [[] for _ in range(6)], []
        L = self.length
        ncell = 0
        for si, sub in enumerate(subs):
            kinds = {s.kind for s in sub.segs}
            if kinds == {"constant"}:
                x = np.array([sub.a, sub.b])
            else:
                gl = [grading_exponent(s, sub.a) for s in sub.segs]
                gr = [grading_exponent(s, sub.b) for s in sub.segs]
                el = min([e for e in gl if is_singular_exponent(e)], default=0.0)
                er = min([e for e in gr if is_singular_exponent(e)], default=0.0)
                if kinds <= {"constant", "table", "polynomial"} and all(
                        s.kind != "polynomial" or len(s.params["coeffs"]) <= 2 for s in sub.segs) \
                        and el == er == 0.0:
                    base = 8
                else:
                    base = max(16, int(math.ceil(CELLS_PER_UNIT * (sub.b - sub.a) / L)))
                    if el or er:
                        base *= 2
                near = [standoff(s) for s in sub.segs]
                x = mesh_nodes(sub.a, sub.b, base * 2 ** level, el, er, per_layer=min(2 ** (level + 3), 64),
                               near_left=min(d[0] for d in near), near_right=min(d[1] for d in near))
            n = x.size - 1
            lo, hi = x[:-1], x[1:]
            h = hi - lo
            for c, seg in enumerate(sub.segs):
                m0 = np.empty(n)
                m1 = np.empty(n)
                el, er = sub.e_left[c], sub.e_right[c]
                if n == 1:
                    a0, a1 = cell_moments(seg, lo, hi, el, er)
                    m0[:], m1[:] = a0, a1
                else:
                    a0, a1 = cell_moments(seg, lo[:1], hi[:1], el, 0.0)
                    m0[0], m1[0] = a0[0], a1[0]
                    a0, a1 = cell_moments(seg, lo[-1:], hi[-1:], 0.0, er)
                    m0[-1], m1[-1] = a0[0], a1[0]
                    if n > 2:
                        a0, a1 = cell_moments(seg, lo[1:-1], hi[1:-1])
                        m0[1:-1], m1[1:-1] = a0, a1
                moms[2 * c].append(m0)
                moms[2 * c + 1].append(m1 / h)
            sub.first, sub.count = ncell, n
            ncell += n
            nodes_all.append(x[:-1])
            owner.append(np.full(n, si))
        nodes = np.concatenate(nodes_all + [[self.interval[1]]])
        moments = tuple(np.ascontiguousarray(np.concatenate(m)) for m in moms)
        for m in moments:
            if not np.all(np.isfinite(m)):
                raise SingularityError("non-finite cell moment: singularity too strong for the integrator")
        mesh = Mesh(nodes, moments, np.concatenate(owner), subs, level)
        self._cache[key] = mesh
        return mesh

    def level_for(self, z: complex, refine: int = 0) -> int:
        """Mesh level for spectral parameter ``z``.

        The fourth-order step has local error growing like ``|z|**1.5 h**5`` on
        non-constant cells, so the cell count is scaled with ``|z|**(3/8)``; the
        per-cell phase ``sqrt(|z| P0 R0)`` is also kept below ``PHASE_TARGET``.
        """
        base = self.mesh(0)
        if all({s.kind for s in sub.segs} == {"constant"} for sub in base.subs):
            return 0
        az = abs(z)
        growth = (1.0 + az) ** 0.375 / Z_GROWTH_SCALE
        lvl = int(math.ceil(math.log2(growth))) if growth > 1 else 0
        ph = math.sqrt(az + 1.0) * base.phase()
        if ph > PHASE_TARGET:
            lvl = max(lvl, int(math.ceil(math.log2(ph / PHASE_TARGET))))
        return min(MAX_LEVEL, lvl + refine)


def constant_problem(p: float = 1.0, q: float = 0.0, r: float = 1.0, L: float = 1.0) -> SturmLiouvilleProblem:
    iv = (0.0, float(L))
    return SturmLiouvilleProblem(constant_profile(p, iv), constant_profile(q, iv), constant_profile(r, iv),
                                 name=f"const(p={p},q={q},r={r},L={L})")


def unit_problem(L: float = 1.0) -> SturmLiouvilleProblem:
    """``p = r = 1``, ``q = 0`` on ``[0, L]``."""
    return constant_problem(1.0, 0.0, 1.0, L)


def growth_constant(problem: SturmLiouvilleProblem) -> float:
    """``A = 1/2 int (1/|p| + r)``, the exponential type of the fundamental system."""
    A = problem.growthA
    if not (np.isfinite(A) and A > 0):
        raise IntegrabilityError(f"growth constant is not finite and positive: {A}")
    return A


# --------------------------------------------------------------------------
# solutions
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuasiSolution:
    """Sampled solution ``(u, p u')`` with per-node log scale.

    ``uVals``/``quasiVals`` are the plain values (they may overflow for large
    ``|z|``); ``u_mant``, ``q_mant`` and ``logs`` hold the same data safely.
    """

    problem: SturmLiouvilleProblem
    z: complex
    mesh: Mesh
    u_mant: np.ndarray
    q_mant: np.ndarray
    logs: np.ndarray

    @property
    def grid(self) -> np.ndarray:
        return self.mesh.nodes

    @property
    def uVals(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return self.u_mant * np.exp(self.logs)

    @property
    def quasiVals(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return self.q_mant * np.exp(self.logs)

    def scaled(self, log_ref: float) -> "QuasiSolution":
        """Same solution multiplied by ``exp(-log_ref)``."""
        return QuasiSolution(self.problem, self.z, self.mesh, self.u_mant, self.q_mant, self.logs - log_ref)

    def _locate(self, x: float) -> int:
        nodes = self.grid
        if not (nodes[0] - 1e-14 <= x <= nodes[-1] + 1e-14):
            raise ContractError(f"abscissa {x} outside [{nodes[0]}, {nodes[-1]}]")
        return int(np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, nodes.size - 2))

    def at_scaled(self, x: float) -> tuple[complex, complex, float]:
        """``(u, p u', log_scale)`` at an arbitrary abscissa.

        Between nodes the solution is advanced from the left node by one
        Magnus step over the partial cell, which keeps the fourth-order
        accuracy of the node values.
        """
        k = self._locate(x)
        nodes = self.grid
        if abs(x - nodes[k]) <= 1e-15 * max(1.0, abs(x)):
            return self.u_mant[k], self.q_mant[k], self.logs[k]
        if abs(x - nodes[k + 1]) <= 1e-15 * max(1.0, abs(x)):
            return self.u_mant[k + 1], self.q_mant[k + 1], self.logs[k + 1]
        sub = self.mesh.subs[self.mesh.cell_sub[k]]
        first = k == sub.first
        lo, hi = np.array([nodes[k]]), np.array([x])
        mom = []
        for c, seg in enumerate(sub.segs):
            a0, a1 = cell_moments(seg, lo, hi, sub.e_left[c] if first else 0.0, 0.0)
            mom += [np.ascontiguousarray(a0), np.ascontiguousarray(a1 / (hi - lo))]
        Y, L = kernel.propagate(tuple(mom), self.z, [self.u_mant[k], self.q_mant[k]])
        return Y[1, 0], Y[1, 1], L[1] + self.logs[k]

    def at(self, x: float) -> tuple[complex, complex]:
        u, v, lg = self.at_scaled(x)
        s = math.exp(lg)
        return u * s, v * s

    def residual(self) -> float:
        """Step-doubling estimate of the local error of the integrated system.

        Each cell is recomputed as two half-cell steps; the largest relative
        mismatch of ``(u, p u')`` at the right node is returned.
        """
        mesh = self.mesh
        nodes = mesh.nodes
        worst = 0.0
        for sub in mesh.subs:
            ks = np.arange(sub.first, sub.first + sub.count)
            lo, hi = nodes[ks], nodes[ks + 1]
            mid = 0.5 * (lo + hi)
            halves = []
            for a_, b_, left in ((lo, mid, True), (mid, hi, False)):
                mom = []
                for c, seg in enumerate(sub.segs):
                    m0 = np.empty(ks.size)
                    m1 = np.empty(ks.size)
                    for j in range(ks.size):
                        el = sub.e_left[c] if (left and j == 0) else 0.0
                        er = sub.e_right[c] if ((not left) and j == ks.size - 1) else 0.0
                        r0, r1 = cell_moments(seg, a_[j:j + 1], b_[j:j + 1], el, er)
                        m0[j], m1[j] = r0[0], r1[0] / (b_[j] - a_[j])
                    mom += [m0, m1]
                halves.append(mom)
            for j, k in enumerate(ks):
                y = [self.u_mant[k], self.q_mant[k]]
                m1_ = tuple(np.ascontiguousarray(h[j:j + 1]) for h in halves[0])
                Y1, L1 = kernel.propagate(m1_, self.z, y)
                m2_ = tuple(np.ascontiguousarray(h[j:j + 1]) for h in halves[1])
                Y2, L2 = kernel.propagate(m2_, self.z, Y1[1])
                ref = np.array([self.u_mant[k + 1], self.q_mant[k + 1]])
                est = Y2[1] * math.exp(L1[1] + L2[1] + self.logs[k] - self.logs[k + 1])
                worst = max(worst, float(np.max(np.abs(est - ref)) / max(np.max(np.abs(ref)), 1e-300)))
        return worst


def _slice_moments(mesh: Mesh, start: int, stop: int) -> tuple:
    return tuple(np.ascontiguousarray(m[start:stop]) for m in mesh.moments)


def _solve_from(problem: SturmLiouvilleProblem, z: complex, base: float, alpha: complex, beta: complex,
                refine: int = 0) -> QuasiSolution:
    a, b = problem.interval
    if not (a - 1e-14 <= base <= b + 1e-14):
        raise ContractError(f"base point {base} outside [{a}, {b}]")
    base = min(max(base, a), b)
    z = complex(z)
    extra = () if base in (a, b) else (base,)
    mesh = problem.mesh(problem.level_for(z, refine), extra)
    n = mesh.ncells
    j = int(np.argmin(np.abs(mesh.nodes - base)))
    u = np.empty(n + 1, complex)
    v = np.empty(n + 1, complex)
    logs = np.empty(n + 1)
    y0 = np.array([alpha, beta], complex)
    if not np.any(y0):
        return QuasiSolution(problem, z, mesh, np.zeros(n + 1, complex), np.zeros(n + 1, complex), np.zeros(n + 1))
    if j < n:
        Y, L = kernel.propagate(_slice_moments(mesh, j, n), z, y0)
        u[j:], v[j:], logs[j:] = Y[:, 0], Y[:, 1], L
    if j > 0:
        Y, L = kernel.propagate(_slice_moments(mesh, 0, j), z, y0, True)
        u[:j + 1], v[:j + 1], logs[:j + 1] = Y[:, 0], Y[:, 1], L
    return QuasiSolution(problem, z, mesh, u, v, logs)


def integrate_cauchy(problem: SturmLiouvilleProblem, z: complex, basePoint: float,
                     alpha: complex, beta: complex, refine: int = 0) -> QuasiSolution:
    """Solution with ``u(basePoint) = alpha`` and ``(p u')(basePoint) = beta``."""
    return _solve_from(problem, z, basePoint, alpha, beta, refine)


class FundamentalSystem(NamedTuple):
    c0: QuasiSolution
    s0: QuasiSolution
    c1: QuasiSolution
    s1: QuasiSolution


def fundamental_system(problem: SturmLiouvilleProblem, z: complex, refine: int = 0) -> FundamentalSystem:
    """``c0, s0`` normalised at the left end, ``c1, s1`` at the right end."""
    a, b = problem.interval
    return FundamentalSystem(
        _solve_from(problem, z, a, 1.0, 0.0, refine),
        _solve_from(problem, z, a, 0.0, 1.0, refine),
        _solve_from(problem, z, b, 1.0, 0.0, refine),
        _solve_from(problem, z, b, 0.0, 1.0, refine),
    )


def wronskian(u: QuasiSolution, v: QuasiSolution, x: float) -> complex:
    """Modified Wronskian ``u v^[1] - u^[1] v`` at ``x``."""
    if u.problem is not v.problem:
        raise ContractError("solutions belong to different problems")
    if u.z != v.z:
        raise ContractError(f"solutions at different spectral parameters {u.z} and {v.z}")
    uu, uq, lu = u.at_scaled(x)
    vu, vq, lv = v.at_scaled(x)
    with np.errstate(over="ignore"):
        return complex((uu * vq - uq * vu) * np.exp(lu + lv))


def wronskian_profile(u: QuasiSolution, v: QuasiSolution) -> np.ndarray:
    """Wronskian at every grid node (both solutions must share a mesh)."""
    if u.problem is not v.problem or u.z != v.z:
        raise ContractError("solutions belong to different problems or spectral parameters")
    if u.mesh is not v.mesh:
        raise ContractError("solutions were computed on different meshes")
    with np.errstate(over="ignore"):
        return (u.u_mant * v.q_mant - u.q_mant * v.u_mant) * np.exp(u.logs + v.logs)


# --------------------------------------------------------------------------
# characteristic and Weyl functions
# --------------------------------------------------------------------------

class Characteristics(NamedTuple):
    """``delta = W(s0, s1)``, ``D = W(c0, s1)``, ``E = W(c1, s0)``.

    ``mantissa`` holds ``(delta, D, E) * exp(-log_scale)``; ``consistency`` is
    the relative mismatch between the values read at the two ends.
    """

    delta: complex
    D: complex
    E: complex
    mantissa: np.ndarray
    log_scale: float
    consistency: float


def _transfer(problem: SturmLiouvilleProblem, zs, refine: int = 0):
    """Forward transfer mantissas, logs and zero counts for many ``z``."""
    zs = np.atleast_1d(np.asarray(zs, complex))
    T = np.empty((zs.size, 2, 2), complex)
    logs = np.empty(zs.size)
    counts = np.empty((zs.size, 2), np.int64)
    levels = np.array([problem.level_for(z, refine) for z in zs])
    for lvl in np.unique(levels):
        sel = np.nonzero(levels == lvl)[0]
        mesh = problem.mesh(int(lvl))
        t, lg, c = kernel.transfer(mesh.moments, zs[sel])
        T[sel], logs[sel], counts[sel] = t, lg, c
    return T, logs, counts


def _backward(problem: SturmLiouvilleProblem, z: complex, refine: int = 0):
    """Values at the left end of ``c1`` and ``s1`` (mantissas, common log)."""
    mesh = problem.mesh(problem.level_for(z, refine))
    Yc, Lc = kernel.propagate(mesh.moments, z, [1.0, 0.0], True)
    Ys, Ls = kernel.propagate(mesh.moments, z, [0.0, 1.0], True)
    lg = max(Lc[0], Ls[0])
    B = np.array([[Yc[0, 0] * math.exp(Lc[0] - lg), Ys[0, 0] * math.exp(Ls[0] - lg)],
                  [Yc[0, 1] * math.exp(Lc[0] - lg), Ys[0, 1] * math.exp(Ls[0] - lg)]])
    return B, lg


def characteristics_batch(problem: SturmLiouvilleProblem, zs, refine: int = 0):
    """Mantissas ``(nz, 3)`` of ``(delta, D, E)`` and their log scales."""
    T, logs, _ = _transfer(problem, zs, refine)
    mant = np.stack([T[:, 0, 1], T[:, 0, 0], T[:, 1, 1]], axis=1)
    return mant, logs


def characteristics(problem: SturmLiouvilleProblem, z: complex, refine: int = 0,
                    check: bool = True) -> Characteristics:
    """Characteristic functions at ``z``, read at both ends of the interval."""
    z = complex(z)
    T, logs, _ = _transfer(problem, [z], refine)
    T, lg = T[0], float(logs[0])
    mant = np.array([T[0, 1], T[0, 0], T[1, 1]])
    consistency = 0.0
    if check:
        B, lb = _backward(problem, z, refine)
        other = np.array([-B[0, 1], B[1, 1], B[0, 0]]) * math.exp(lb - lg) if np.isfinite(lb - lg) else mant
        consistency = float(np.max(np.abs(other - mant)) / max(np.max(np.abs(mant)), 1e-300))
    with np.errstate(over="ignore"):
        vals = mant * math.exp(lg) if lg < 700 else mant * np.inf
    return Characteristics(complex(vals[0]), complex(vals[1]), complex(vals[2]), mant, lg, consistency)


def envelope_log(problem: SturmLiouvilleProblem, z: complex) -> float:
    """Log of the growth envelope ``exp(W |Im sqrt z|) / (1 + |sqrt z|)``.

    ``W = int sqrt(r/p)`` is the exponential type of the characteristic
    function; it never exceeds the growth constant ``A``.
    """
    sz = np.sqrt(complex(z))
    return problem.weyl_length() * abs(sz.imag) - math.log1p(abs(sz))


def _pole_guard(problem, z, delta_mant, lg):
    a = abs(delta_mant)
    if a == 0 or math.log(a) + lg < math.log(POLE_THRESHOLD) + envelope_log(problem, z):
        raise PoleError(f"z = {z} is at or next to a Dirichlet eigenvalue (|delta| too small)")


class WeylFunctions(NamedTuple):
    M: complex
    N: complex
    consistency: float


def weyl_functions(problem: SturmLiouvilleProblem, z: complex, refine: int = 0,
                   check: bool = True) -> WeylFunctions:
    """Weyl-Titchmarsh functions ``M = -c0(L)/s0(L)`` and ``N = c1(0)/s1(0)``.

    ``M`` is read from the forward shooting and ``N`` from the backward one;
    with ``check`` the alternative forms ``-D/delta`` and ``-E/delta`` are
    computed from the opposite direction and their relative mismatch returned.
    """
    z = complex(z)
    T, logs, _ = _transfer(problem, [z], refine)
    T = T[0]
    _pole_guard(problem, z, T[0, 1], float(logs[0]))
    M = -T[0, 0] / T[0, 1]
    N_alt = -T[1, 1] / T[0, 1]
    if not check:
        return WeylFunctions(complex(M), complex(N_alt), 0.0)
    B, _ = _backward(problem, z, refine)
    N = B[0, 0] / B[0, 1]
    M_alt = B[1, 1] / B[0, 1]
    cons = max(abs(M - M_alt) / max(abs(M), 1e-300), abs(N - N_alt) / max(abs(N), 1e-300))
    return WeylFunctions(complex(M), complex(N), float(cons))


def weyl_functions_batch(problem: SturmLiouvilleProblem, zs, refine: int = 0):
    """Vectorised ``(M, N)`` from the forward transfer only (no cross-check)."""
    zs = np.atleast_1d(np.asarray(zs, complex))
    T, logs, _ = _transfer(problem, zs, refine)
    for z, t, lg in zip(zs, T, logs):
        _pole_guard(problem, z, t[0, 1], float(lg))
    return -T[:, 0, 0] / T[:, 0, 1], -T[:, 1, 1] / T[:, 0, 1]


def weyl_solutions(problem: SturmLiouvilleProblem, z: complex, refine: int = 0):
    """``(Psi, Phi)``: ``Psi(a) = 1, Psi(b) = 0`` and ``Phi(a) = 0, Phi(b) = 1``.

    ``Phi = s0 / s0(b)`` is integrated forward and ``Psi = s1 / s1(a)``
    backward, so both are computed in their stable direction.
    """
    z = complex(z)
    a, b = problem.interval
    s0 = _solve_from(problem, z, a, 0.0, 1.0, refine)
    s1 = _solve_from(problem, z, b, 0.0, 1.0, refine)
    _pole_guard(problem, z, s0.u_mant[-1], float(s0.logs[-1]))
    phi = _normalise(s0, -1)
    psi = _normalise(s1, 0)
    return psi, phi


def _normalise(sol: QuasiSolution, idx: int) -> QuasiSolution:
    c = sol.u_mant[idx]
    return QuasiSolution(sol.problem, sol.z, sol.mesh, sol.u_mant / c, sol.q_mant / c,
                         sol.logs - sol.logs[idx])


# --------------------------------------------------------------------------
# spectra
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumResult:
    """First ``kMax`` eigenvalues for one pair of separated boundary conditions."""

    eigenvalues: np.ndarray
    boundaryKind: str
    residual: float
    weyl_consistent: bool = True
    refinements: int = 0

    def __len__(self) -> int:
        return len(self.eigenvalues)


def _char_index(kind: str) -> tuple[int, int]:
    return {"DD": (0, 1), "ND": (0, 0), "DN": (1, 1)}[kind]


def counting_function(problem: SturmLiouvilleProblem, kind: str, zs, refine: int = 0):
    """Number of eigenvalues strictly below each real ``z``."""
    kind = KIND_ALIASES[kind]
    zs = np.atleast_1d(np.asarray(zs, float))
    T, _, counts = _transfer(problem, zs.astype(complex), refine)
    if kind == "DD":
        n = counts[:, 1] - (T[:, 0, 1].real == 0)
    elif kind == "ND":
        n = counts[:, 0] - (T[:, 0, 0].real == 0)
    else:
        s_end = T[:, 0, 1].real
        n = counts[:, 1] - (s_end == 0) + ((s_end * T[:, 1, 1].real) < 0)
    return n.astype(np.int64), T


def _char_values(T, logs, kind):
    i, j = _char_index(kind)
    return T[:, i, j].real, logs


def _lower_bound(problem: SturmLiouvilleProblem) -> float:
    mesh = problem.mesh(0)
    _, _, Q0, _, R0, _ = mesh.moments
    ratio = np.min(Q0 / R0)
    return float(ratio - 1.0 - 0.1 * abs(ratio))


def spectra(problem: SturmLiouvilleProblem, boundaryKind: str = "DD", kMax: int = 10,
            refine: int = 0, tol: float = EIG_RESIDUAL) -> SpectrumResult:
    """First ``kMax`` eigenvalues for Dirichlet/Neumann end conditions.

    ``boundaryKind`` is ``"DD"`` (zeros of delta), ``"ND"`` (Neumann at the
    left end, zeros of D) or ``"DN"`` (Neumann at the right end, zeros of E).
    """
    if kMax < 1:
        raise ContractError("kMax must be at least 1")
    kind = KIND_ALIASES.get(boundaryKind)
    if kind is None:
        raise ContractError(f"unknown boundary kind {boundaryKind!r}")
    if not problem.positive:
        raise ContractError("oscillation counting needs p > 0")
    last_err = None
    for attempt in range(3):
        try:
            vals, resid = _spectra_once(problem, kind, kMax, refine + attempt, tol)
            break
        except BracketingError as exc:
            last_err = exc
    else:
        raise BracketingError(f"eigenvalue isolation failed after mesh refinement: {last_err}")
    W = problem.weyl_length()
    k = np.arange(1, kMax + 1)
    shift = 0.5 if kind in ("ND", "DN") else 0.0
    predicted = (k - shift) * np.pi / W
    observed = np.sqrt(np.maximum(vals - vals[0] + ((1 - shift) * np.pi / W) ** 2, 0.0))
    big = k >= 10
    consistent = bool(np.all(np.abs(observed[big] / predicted[big] - 1) < 0.5)) if np.any(big) else True
    if not consistent:
        raise BracketingError("computed eigenvalue density disagrees with the Weyl law")
    return SpectrumResult(vals, kind, resid, consistent, attempt)


def _spectra_once(problem, kind, kMax, refine, tol):
    z_lo = _lower_bound(problem)
    for _ in range(60):
        n_lo, _ = counting_function(problem, kind, [z_lo], refine)
        if n_lo[0] == 0:
            break
        z_lo -= 2.0 * (1.0 + abs(z_lo))
    else:
        raise BracketingError("no lower bound for the spectrum found")
    W = problem.weyl_length()
    t_hi = (kMax + 2) * np.pi / W + 1.0
    for _ in range(60):
        n_hi, _ = counting_function(problem, kind, [z_lo + t_hi ** 2], refine)
        if n_hi[0] >= kMax:
            break
        t_hi *= 1.5
    else:
        raise BracketingError("no upper bound for the requested eigenvalues found")

    # batched bisection in t = sqrt(z - z_lo) until each k sits alone in [lo, hi]
    grid = np.linspace(0.0, t_hi, 4 * kMax + 2)
    counts, _ = counting_function(problem, kind, z_lo + grid ** 2, refine)
    if np.any(np.diff(counts) < 0):
        raise BracketingError("oscillation count is not monotone on the search grid")
    k = np.arange(1, kMax + 1)
    hi_idx = np.searchsorted(counts, k, side="left")
    lo_t = grid[hi_idx - 1].copy()
    hi_t = grid[hi_idx].copy()
    lo_n = counts[hi_idx - 1].copy()
    hi_n = counts[hi_idx].copy()
    for _ in range(200):
        open_ = (lo_n != k - 1) | (hi_n != k)
        if not np.any(open_):
            break
        mid = 0.5 * (lo_t[open_] + hi_t[open_])
        mid_n, _ = counting_function(problem, kind, z_lo + mid ** 2, refine)
        kk = k[open_]
        go_left = mid_n >= kk
        idx = np.nonzero(open_)[0]
        hi_t[idx[go_left]] = mid[go_left]
        hi_n[idx[go_left]] = mid_n[go_left]
        lo_t[idx[~go_left]] = mid[~go_left]
        lo_n[idx[~go_left]] = mid_n[~go_left]
        if np.any(hi_t[open_] - lo_t[open_] < 1e-15 * np.maximum(hi_t[open_], 1.0)):
            raise BracketingError("eigenvalues could not be separated (multiple or clustered root)")
    else:
        raise BracketingError("bisection did not isolate all eigenvalues")

    # Illinois iteration on the characteristic function inside each bracket
    a = z_lo + lo_t ** 2
    b = z_lo + hi_t ** 2
    T, la, _ = _transfer(problem, a.astype(complex), refine)
    fa, _ = _char_values(T, la, kind)
    T, lb, _ = _transfer(problem, b.astype(complex), refine)
    fb, _ = _char_values(T, lb, kind)
    # put both ends on the scale of the left end
    fb = fb * np.exp(lb - la)
    bad = (fa == 0) & (fb == 0)
    if np.any(np.sign(fa) == np.sign(fb)) or np.any(bad):
        raise BracketingError("characteristic function does not change sign on an isolating bracket")
    ref = la
    x = 0.5 * (a + b)
    side = np.zeros(kMax, int)
    done = np.zeros(kMax, bool)
    for _ in range(200):
        act = ~done
        if not np.any(act):
            break
        x_new = (a * fb - b * fa) / (fb - fa)
        bis = ~np.isfinite(x_new) | (x_new <= np.minimum(a, b)) | (x_new >= np.maximum(a, b))
        x_new = np.where(bis, 0.5 * (a + b), x_new)
        T, lx, _ = _transfer(problem, x_new[act].astype(complex), refine)
        fx = np.zeros(kMax)
        fv, _ = _char_values(T, lx, kind)
        fx[act] = fv * np.exp(lx - ref[act])
        same_a = np.sign(fx) == np.sign(fa)
        upd_a = act & same_a
        upd_b = act & ~same_a
        a = np.where(upd_a, x_new, a)
        fa = np.where(upd_a, fx, fa)
        b = np.where(upd_b, x_new, b)
        fb = np.where(upd_b, fx, fb)
        # Illinois modification: halve the stale end after two moves on one side
        fb = np.where(upd_a & (side == 1), 0.5 * fb, fb)
        fa = np.where(upd_b & (side == -1), 0.5 * fa, fa)
        side = np.where(upd_a, 1, np.where(upd_b, -1, side))
        width = np.abs(b - a)
        done |= (width <= 4e-16 * np.maximum(np.abs(a), np.abs(b)) + 1e-300) | (fx == 0) & act
    roots = np.where(np.abs(fa) < np.abs(fb), a, b)
    roots = np.where(done, np.where(np.abs(fa) < np.abs(fb), a, b), 0.5 * (a + b))
    if np.any(np.diff(roots) <= 0):
        raise BracketingError("computed eigenvalues are not strictly increasing")
    T, lr, _ = _transfer(problem, roots.astype(complex), refine)
    fr, _ = _char_values(T, lr, kind)
    env = np.array([envelope_log(problem, z) for z in roots])
    resid = float(np.max(np.abs(fr) * np.exp(lr - env))) if roots.size else 0.0
    return roots, resid
