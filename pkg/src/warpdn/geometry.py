"""Warped-product cylinders ``[0, 1] x K1 x K2`` and their radial reduction.

A metric ``h0 dx^2 + h1 g1 + h2 g2`` separates on products of fiber
harmonics.  For each pair of fiber eigenvalues ``(mu, nu)`` the radial factor
solves the Sturm-Liouville equation

    -(p u')' + q u = z r u,    z = -mu,

with ``p = r = sqrt(h)`` and ``q = (nu h1/h2 - lam h1) sqrt(h)`` where
``h = h1**(n1-1) h2**n2`` (the ``h0 = h1`` case).  A general ``h0`` is
removed by the change of variables ``y = int sqrt(h0/h1)``.
"""
from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, IntegrabilityError, ProfileError, RegimeError
from .profiles import (Antiderivative, CoefficientProfile, Segment, constant_profile,
                       exponent_at)
from .sl_core import SturmLiouvilleProblem

__all__ = [
    "FiberSpectrum", "fiber_spectrum", "first_eigenvalues", "WarpedMetric", "BoundaryData",
    "ChangeOfVariables", "radial_coefficients", "radial_problem", "normalize_metric",
    "harmonic_pairs", "REGULARITY_CLASSES",
]

REGULARITY_CLASSES = ("boundedElliptic", "criticalL1", "singular")


# --------------------------------------------------------------------------
# fiber spectra
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FiberSpectrum:
    """Distinct Laplace eigenvalues of a closed fiber with multiplicities."""

    kind: str
    entries: tuple[tuple[float, int], ...]
    fiberDim: int
    volume: float
    cutoff: float

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([e for e, _ in self.entries], float)

    @property
    def multiplicities(self) -> np.ndarray:
        return np.array([m for _, m in self.entries], int)

    def counting(self, mu) -> np.ndarray:
        """``N(mu)``: number of eigenvalues ``<= mu`` counted with multiplicity."""
        cum = np.cumsum(self.multiplicities)
        idx = np.searchsorted(self.eigenvalues, np.asarray(mu, float), side="right")
        return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0)

    def weyl_constant(self) -> float:
        """``C`` in ``N(mu) ~ C mu**(n/2)``, i.e. ``omega_n vol / (2 pi)**n``."""
        n = self.fiberDim
        omega = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
        return omega * self.volume / (2 * math.pi) ** n


def _merge(pairs) -> tuple[tuple[float, int], ...]:
    acc: dict[float, int] = {}
    for mu, mult in pairs:
        key = float(mu)
        acc[key] = acc.get(key, 0) + int(mult)
    return tuple(sorted(acc.items()))


def _circle(cutoff: float):
    mmax = int(math.isqrt(int(math.floor(cutoff))))
    return [(0.0, 1)] + [(float(m * m), 2) for m in range(1, mmax + 1)], 1, 2 * math.pi


def _sphere2(cutoff: float):
    out = []
    l = 0
    while l * (l + 1) <= cutoff:
        out.append((float(l * (l + 1)), 2 * l + 1))
        l += 1
    return out, 2, 4 * math.pi


def _torus(d: int, cutoff: float):
    if d < 1:
        raise ContractError("torus dimension must be >= 1")
    kmax = int(math.isqrt(int(math.floor(cutoff))))
    rng = range(-kmax, kmax + 1)
    # squared norms of lattice points, counted via the 1-d factors
    sq = np.array([k * k for k in rng])
    counts: dict[int, int] = {0: 1}
    for _ in range(d):
        nxt: dict[int, int] = {}
        for s, c in counts.items():
            for k2 in sq:
                t = s + int(k2)
                if t <= cutoff:
                    nxt[t] = nxt.get(t, 0) + c
        counts = nxt
    return [(float(k), c) for k, c in counts.items()], d, (2 * math.pi) ** d


_TORUS = re.compile(r"^torus\((\d+)\)$")
_PRODUCT = re.compile(r"^product\((.+)\)$")


def _split_args(text: str) -> tuple[str, str]:
    depth = 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            return text[:i].strip(), text[i + 1:].strip()
    raise ContractError(f"product fiber needs two factors: {text!r}")


def fiber_spectrum(kind: str, cutoff: float) -> FiberSpectrum:
    """Exact spectrum of a model fiber up to ``cutoff``.

    ``kind`` is one of ``circle``, ``sphere2``, ``torus(d)`` or
    ``product(a,b)`` (recursively).  Flat tori are ``R^d / (2 pi Z)^d``.
    """
    if cutoff < 1:
        raise ContractError("fiber cutoff must be >= 1")
    k = kind.replace(" ", "")
    if k == "circle":
        pairs, dim, vol = _circle(cutoff)
    elif k == "sphere2":
        pairs, dim, vol = _sphere2(cutoff)
    elif _TORUS.match(k):
        pairs, dim, vol = _torus(int(_TORUS.match(k).group(1)), cutoff)
    elif _PRODUCT.match(k):
        a, b = _split_args(_PRODUCT.match(k).group(1))
        fa, fb = fiber_spectrum(a, cutoff), fiber_spectrum(b, cutoff)
        pairs = [(ea + eb, ma * mb) for (ea, ma), (eb, mb) in itertools.product(fa.entries, fb.entries)
                 if ea + eb <= cutoff]
        dim, vol = fa.fiberDim + fb.fiberDim, fa.volume * fb.volume
    else:
        raise ContractError(f"unsupported fiber kind {kind!r}")
    return FiberSpectrum(k, _merge(pairs), dim, vol, float(cutoff))


def first_eigenvalues(kind: str, count: int) -> FiberSpectrum:
    """Fiber spectrum with at least ``count`` distinct eigenvalues."""
    cutoff = max(1.0, float(count))
    while True:
        spec = fiber_spectrum(kind, cutoff)
        if len(spec.entries) >= count:
            return FiberSpectrum(spec.kind, spec.entries[:count], spec.fiberDim, spec.volume,
                                 spec.entries[count - 1][0])
        cutoff *= 2.0


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

def _profile_bounds(prof: CoefficientProfile, samples: int = 257) -> tuple[float, float]:
    lo, hi = math.inf, -math.inf
    for seg in prof.segments:
        a, b = seg.span
        e = seg.exponents()
        xs = np.linspace(a, b, samples)
        if e[0] != 0:
            xs = xs[1:]
        if e[1] != 0:
            xs = xs[:-1]
        vals = np.asarray(seg(xs), float)
        if e[0] < 0 or e[1] < 0:
            return float(np.min(vals)), math.inf
        if e[0] > 0 or e[1] > 0:
            lo = min(lo, 0.0)
        lo = min(lo, float(np.min(vals)))
        hi = max(hi, float(np.max(vals)))
    return lo, hi


@dataclass(frozen=True, eq=False)
class WarpedMetric:
    """``h0 dx^2 + h1 g1 + h2 g2`` on ``interval x K1 x K2``.

    ``h0 = None`` means ``h0 = h1`` (the conformally normalised form).
    ``fiber1``/``fiber2`` are fiber kinds understood by :func:`fiber_spectrum`.
    """

    n1: int
    n2: int
    h1: CoefficientProfile
    h2: CoefficientProfile | None = None
    h0: CoefficientProfile | None = None
    regularity: str = "boundedElliptic"
    fiber1: str = "circle"
    fiber2: str | None = None
    bounds: tuple[float, float] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 0 or self.n1 + self.n2 < 2:
            raise ContractError(f"need n1 >= 1, n2 >= 0, n1 + n2 >= 2 (got {self.n1}, {self.n2})")
        if self.regularity not in REGULARITY_CLASSES:
            raise ContractError(f"unknown regularity class {self.regularity!r}")
        if self.h2 is None:
            object.__setattr__(self, "h2", constant_profile(1.0, self.h1.interval))
        for name in ("h0", "h1", "h2"):
            prof = getattr(self, name)
            if prof is None:
                continue
            if prof.interval != self.h1.interval:
                raise ProfileError(f"{name} lives on {prof.interval}, h1 on {self.h1.interval}")
            if any(s <= 0 for s in prof.signs):
                raise ProfileError(f"{name} must be positive")
        if self.n2 > 0 and self.fiber2 is None:
            raise ContractError("n2 > 0 needs a second fiber")
        self.validate()

    # ---- derived profiles ------------------------------------------------------
    @property
    def interval(self) -> tuple[float, float]:
        return self.h1.interval

    @property
    def h(self) -> CoefficientProfile:
        """``h1**(n1-1) h2**n2``."""
        if "h" not in self._cache:
            prof = self.h1 ** float(self.n1 - 1)
            if self.n2:
                prof = prof * self.h2 ** float(self.n2)
            self._cache["h"] = prof
        return self._cache["h"]

    @property
    def sqrt_h(self) -> CoefficientProfile:
        if "sqrt_h" not in self._cache:
            prof = self.h1 ** (0.5 * (self.n1 - 1))
            if self.n2:
                prof = prof * self.h2 ** (0.5 * self.n2)
            self._cache["sqrt_h"] = prof
        return self._cache["sqrt_h"]

    @property
    def gauge_density(self) -> CoefficientProfile | None:
        """``sqrt(h0/h1)``, or ``None`` when ``h0 = h1``."""
        if self.h0 is None:
            return None
        if "rho" not in self._cache:
            self._cache["rho"] = (self.h0 * self.h1.reciprocal()) ** 0.5
        return self._cache["rho"]

    def validate(self):
        """Check the declared regularity class; raises on violation."""
        if self.regularity == "boundedElliptic":
            profs = [self.h1] + ([self.h2] if self.n2 else []) + ([self.h0] if self.h0 is not None else [])
            lo = min(_profile_bounds(p)[0] for p in profs)
            hi = max(_profile_bounds(p)[1] for p in profs)
            if not (lo > 0 and math.isfinite(hi)):
                raise ContractError(f"boundedElliptic metric has coefficient range [{lo:g}, {hi:g}]")
            if self.bounds is not None:
                c, C = self.bounds
                if lo < c * (1 - 1e-12) or hi > C * (1 + 1e-12):
                    raise ContractError(
                        f"coefficients range [{lo:g}, {hi:g}] violates declared bounds [{c:g}, {C:g}]")
        elif self.regularity == "criticalL1":
            self.sqrt_h.l1_certificate("sqrt(h)")
            self.sqrt_h.reciprocal().l1_certificate("1/sqrt(h)")
            if self.h0 is not None:
                self.gauge_density.l1_certificate("sqrt(h0/h1)")

    # ---- harmonics ---------------------------------------------------------------
    def fibers(self, cutoff: float) -> tuple[FiberSpectrum, FiberSpectrum | None]:
        f1 = fiber_spectrum(self.fiber1, cutoff)
        f2 = fiber_spectrum(self.fiber2, cutoff) if self.n2 else None
        return f1, f2

    def harmonics(self, count: int) -> list[tuple[int, int, float, float]]:
        """First ``count`` harmonic pairs ``(m, n, mu_m, nu_n)`` sorted by ``mu + nu``."""
        return harmonic_pairs(self.fiber1, self.fiber2 if self.n2 else None, count)

    # ---- serialization -------------------------------------------------------------
    def to_json(self) -> dict:
        out = {"n1": self.n1, "n2": self.n2, "regularity": self.regularity,
               "h1": self.h1.to_json(), "h2": self.h2.to_json(), "fiber1": self.fiber1,
               "fiber2": self.fiber2}
        if self.h0 is not None:
            out["h0"] = self.h0.to_json()
        if self.bounds is not None:
            out["bounds"] = list(self.bounds)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "WarpedMetric":
        try:
            h1 = CoefficientProfile.from_json(obj["h1"])
            h2 = CoefficientProfile.from_json(obj["h2"]) if obj.get("h2") is not None else None
            h0 = CoefficientProfile.from_json(obj["h0"]) if obj.get("h0") is not None else None
            bounds = tuple(obj["bounds"]) if obj.get("bounds") is not None else None
            return cls(int(obj["n1"]), int(obj.get("n2", 0)), h1, h2, h0,
                       obj.get("regularity", "boundedElliptic"), obj.get("fiber1", "circle"),
                       obj.get("fiber2"), bounds)
        except KeyError as exc:
            raise ProfileError(f"metric description is missing {exc}") from exc

    @classmethod
    def load(cls, path: str) -> "WarpedMetric":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def harmonic_pairs(fiber1: str, fiber2: str | None, count: int) -> list[tuple[int, int, float, float]]:
    """Pairs of distinct fiber eigenvalues ordered by ``mu + nu`` (ties by ``m``)."""
    f1 = first_eigenvalues(fiber1, count)
    if fiber2 is None:
        return [(m, 0, mu, 0.0) for m, (mu, _) in enumerate(f1.entries)]
    f2 = first_eigenvalues(fiber2, count)
    pairs = [(m, n, mu, nu) for (m, (mu, _)), (n, (nu, _))
             in itertools.product(enumerate(f1.entries), enumerate(f2.entries))]
    pairs.sort(key=lambda t: (t[2] + t[3], t[0], t[1]))
    return pairs[:count]


# --------------------------------------------------------------------------
# radial reduction
# --------------------------------------------------------------------------

def radial_coefficients(metric: WarpedMetric, lam: float = 0.0, nu: float = 0.0):
    """``(p, q, r)`` of the radial equation for fiber-2 eigenvalue ``nu``.

    No integrability checks are made here, so singular metrics can be
    inspected; :func:`radial_problem` validates.
    """
    sh = metric.sqrt_h
    q = None
    if nu != 0.0 and metric.n2:
        q = float(nu) * (metric.h1 * metric.h2.reciprocal() * sh)
    if lam != 0.0:
        term = (-float(lam)) * (metric.h1 * sh)
        q = term if q is None else q + term
    if q is None:
        q = constant_profile(0.0, metric.interval)
    rho = metric.gauge_density
    if rho is None:
        return sh, q, sh
    return sh * rho.reciprocal(), q * rho, sh * rho


def radial_problem(metric: WarpedMetric, lam: float = 0.0, nu: float = 0.0) -> SturmLiouvilleProblem:
    """Sturm-Liouville problem of the harmonic with fiber-2 eigenvalue ``nu``.

    The spectral parameter is ``z = -mu`` for fiber-1 eigenvalue ``mu``.
    Nonzero frequency is only meaningful for bounded elliptic metrics.
    """
    if lam != 0.0 and metric.regularity != "boundedElliptic":
        raise RegimeError(f"frequency {lam:g} != 0 is not supported for {metric.regularity} metrics")
    p, q, r = radial_coefficients(metric, lam, nu)
    return SturmLiouvilleProblem(p, q, r, name=f"radial(lam={lam:g}, nu={nu:g})")


# --------------------------------------------------------------------------
# change of variables
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChangeOfVariables:
    """``y = phi(x) = int_a^x sqrt(h0/h1)`` with inverse."""

    forward: Callable
    inverse: Callable
    total: float

    def __call__(self, x):
        return self.forward(x)


def _identity_map(interval) -> ChangeOfVariables:
    a, b = interval

    def ident(x):
        return np.atleast_1d(np.asarray(x, float)) - a

    def inv(y):
        return np.atleast_1d(np.asarray(y, float)) + a

    return ChangeOfVariables(ident, inv, b - a)


def _pullback_segment(seg: Segment, rho_seg: Segment, F: Antiderivative) -> Segment:
    a, b = seg.span
    ya, yb = float(F(a)[0]), float(F(b)[0])

    def map_exponent(xt, rho_seg=rho_seg):
        return exponent_at(rho_seg, xt)

    return Segment((ya, yb), "pullback", {"base": seg, "inverse": F.inverse,
                                          "map_exponent": map_exponent})


def normalize_metric(metric: WarpedMetric) -> tuple[WarpedMetric, ChangeOfVariables]:
    """Remove ``h0`` by the change of variables ``y = int sqrt(h0/h1)``.

    Returns the metric ``H1 (dy^2 + g1) + H2 g2`` on ``[0, A]`` with
    ``H_j = h_j o phi^-1`` and the map ``phi``.
    """
    if metric.h0 is None:
        return metric, _identity_map(metric.interval)
    rho = metric.gauge_density
    try:
        F = Antiderivative(rho)
    except IntegrabilityError as exc:
        raise IntegrabilityError(f"sqrt(h0/h1) is not integrable: {exc}") from exc
    a, b = metric.interval
    bp = np.union1d(np.union1d(metric.h1.breakpoints, metric.h2.breakpoints), rho.breakpoints)
    rho_s = rho.split(bp)

    def pull(prof: CoefficientProfile) -> CoefficientProfile:
        if prof.is_constant():
            return constant_profile(prof.segments[0].params["value"], (0.0, F.total))
        ps = prof.split(bp)
        segs = tuple(_pullback_segment(s, r, F) for s, r in zip(ps.segments, rho_s.segments))
        return CoefficientProfile((0.0, F.total), segs)

    phi = ChangeOfVariables(lambda x: F(x), F.inverse, F.total)
    out = WarpedMetric(metric.n1, metric.n2, pull(metric.h1), pull(metric.h2), None,
                       metric.regularity, metric.fiber1, metric.fiber2, metric.bounds)
    return out, phi


# --------------------------------------------------------------------------
# boundary data
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Harmonic coefficients of Dirichlet (or Neumann) data at both ends."""

    harmonics: tuple[tuple[int, int], ...]
    mu: np.ndarray
    nu: np.ndarray
    psi0: np.ndarray
    psi1: np.ndarray
    sobolevOrder: float
    tail_mass: float = 0.0

    def __post_init__(self):
        n = len(self.harmonics)
        for name in ("mu", "nu", "psi0", "psi1"):
            arr = np.asarray(getattr(self, name), float)
            if arr.shape != (n,):
                raise ContractError(f"{name} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, name, arr)

    def sobolev_norm(self, s: float | None = None) -> float:
        s = self.sobolevOrder if s is None else s
        w = (1.0 + self.mu + self.nu) ** s
        return float(np.sum(w * (self.psi0 ** 2 + self.psi1 ** 2)))

    def certificate(self) -> float:
        """Truncated Sobolev norm; raises if it is not finite."""
        val = self.sobolev_norm()
        if not math.isfinite(val):
            raise ContractError("boundary data has infinite Sobolev norm at the declared order")
        return val

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[int, int, float, float]], psi0, psi1,
                   sobolevOrder: float) -> "BoundaryData":
        pairs = list(pairs)
        return cls(tuple((m, n) for m, n, _, _ in pairs), np.array([p[2] for p in pairs]),
                   np.array([p[3] for p in pairs]), np.asarray(psi0, float), np.asarray(psi1, float),
                   float(sobolevOrder))
