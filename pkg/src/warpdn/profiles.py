"""Piecewise-analytic coefficient profiles on an interval.

A :class:`CoefficientProfile` is an ordered list of :class:`Segment` objects
that partition ``[a, b]``.  Serializable segment kinds are

``constant``    ``{"value": c}``
``polynomial``  ``{"coeffs": [c0, c1, ...]}`` (powers of the absolute abscissa)
``power``       ``{"a": a, "x0": x0, "s": s}`` meaning ``a * |x - x0|**s``
``table``       ``{"x": [...], "y": [...]}`` with piecewise-linear interpolation
``expr``        ``{"expr": "2 + sin(2*pi*x)"}`` numpy expression in ``x``

Composition (powers, products, pullbacks) is symbolic when both operands are
constants or power laws about the same centre and falls back to exact
pointwise ``composite``/``pullback`` segments otherwise.  Every segment knows
the algebraic exponent of its behaviour at any abscissa, which drives the
graded meshes and the Gauss-Jacobi end-cell quadrature used everywhere else.
"""
from __future__ import annotations

import ast
import functools
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.special import roots_jacobi, roots_legendre

from .errors import IntegrabilityError, ProfileError

SERIAL_KINDS = ("constant", "polynomial", "power", "table", "expr")
_ABS_TOL = 1e-13


# --------------------------------------------------------------------------
# expression kind: a tiny whitelisted numpy evaluator
# --------------------------------------------------------------------------

_EXPR_NAMES: dict[str, Any] = {
    "pi": np.pi, "e": np.e,
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh,
    "abs": np.abs, "arctan": np.arctan,
}
_EXPR_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


@functools.lru_cache(maxsize=256)
def _compile_expr(text: str):
    tree = ast.parse(text, mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _EXPR_NODES):
            raise ProfileError(f"disallowed syntax in expression {text!r}")
        if isinstance(node, ast.Name) and node.id not in _EXPR_NAMES and node.id != "x":
            raise ProfileError(f"unknown name {node.id!r} in expression {text!r}")
    return compile(tree, "<profile-expr>", "eval")


# --------------------------------------------------------------------------
# segments
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Segment:
    """One analytic piece of a profile on ``span = (x0, x1)``."""

    span: tuple[float, float]
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        a, b = self.span
        if not (np.isfinite(a) and np.isfinite(b)) or b <= a:
            raise ProfileError(f"bad segment span {self.span}")
        if self.kind == "power":
            x0 = self.params["x0"]
            if a + _tol(a, b) < x0 < b - _tol(a, b):
                raise ProfileError(
                    f"power-law centre {x0} lies inside segment {self.span}; split the segment")
        if self.kind == "table":
            xs = np.asarray(self.params["x"], float)
            if xs.ndim != 1 or xs.size < 2 or np.any(np.diff(xs) <= 0):
                raise ProfileError("table abscissae must be strictly increasing")
            if xs[0] > a + _tol(a, b) or xs[-1] < b - _tol(a, b):
                raise ProfileError("table does not cover its segment span")
        if self.kind == "expr":
            _compile_expr(self.params["expr"])

    # ---- evaluation -----------------------------------------------------
    def __call__(self, x):
        return evaluate(self, x)

    def with_span(self, a: float, b: float) -> "Segment":
        return Segment((float(a), float(b)), self.kind, self.params)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    @property
    def is_zero(self) -> bool:
        return self.kind == "constant" and self.params["value"] == 0.0

    def exponents(self) -> tuple[float, float]:
        a, b = self.span
        return exponent_at(self, a), exponent_at(self, b)

    def grading_exponents(self) -> tuple[float, float]:
        """Exponents that decide mesh grading at the two ends.

        Equal to :meth:`exponents` unless the leading term is smooth but a
        lower-order term is not (``1 + x**0.25`` at 0), in which case the
        rough term's exponent is returned so the end is still graded.
        """
        a, b = self.span
        return grading_exponent(self, a), grading_exponent(self, b)

    def to_json(self, samples: int = 257) -> dict:
        a, b = self.span
        if self.kind in SERIAL_KINDS:
            params = {k: (list(map(float, v)) if isinstance(v, (list, tuple, np.ndarray)) else v)
                      for k, v in self.params.items()}
            return {"span": [a, b], "kind": self.kind, "params": params}
        # composite / pullback segments are emitted as sampled tables
        xs = np.linspace(a, b, samples)
        e_left, e_right = self.exponents()
        inner = xs.copy()
        if e_left != 0:
            inner[0] = a + 1e-9 * (b - a)
        if e_right != 0:
            inner[-1] = b - 1e-9 * (b - a)
        return {"span": [a, b], "kind": "table",
                "params": {"x": xs.tolist(), "y": np.asarray(evaluate(self, inner), float).tolist()}}


def _tol(a: float, b: float) -> float:
    return 1e-14 * max(1.0, abs(a), abs(b))


def constant(value: float, span=(0.0, 1.0)) -> Segment:
    return Segment(tuple(map(float, span)), "constant", {"value": float(value)})


def polynomial(coeffs: Sequence[float], span=(0.0, 1.0)) -> Segment:
    c = [float(v) for v in coeffs]
    if len(c) == 1:
        return constant(c[0], span)
    return Segment(tuple(map(float, span)), "polynomial", {"coeffs": c})


def power(a: float, x0: float, s: float, span=(0.0, 1.0)) -> Segment:
    if s == 0:
        return constant(a, span)
    return Segment(tuple(map(float, span)), "power", {"a": float(a), "x0": float(x0), "s": float(s)})


def table(xs, ys, span=None) -> Segment:
    xs = [float(v) for v in xs]
    ys = [float(v) for v in ys]
    span = span or (xs[0], xs[-1])
    return Segment(tuple(map(float, span)), "table", {"x": xs, "y": ys})


def expr(text: str, span=(0.0, 1.0)) -> Segment:
    return Segment(tuple(map(float, span)), "expr", {"expr": str(text)})


def func(fn: Callable, span=(0.0, 1.0), exponent: Callable | None = None) -> Segment:
    """Wrap a vectorised callable; ``exponent(x)`` reports singular powers."""
    return Segment(tuple(map(float, span)), "func", {"fn": fn, "exponent": exponent})


def evaluate(seg: Segment, x):
    x = np.asarray(x, dtype=float)
    kind, p = seg.kind, seg.params
    if kind == "constant":
        return np.full_like(x, p["value"])
    if kind == "polynomial":
        return npoly.polyval(x, p["coeffs"])
    if kind == "power":
        with np.errstate(divide="ignore"):
            return p["a"] * np.abs(x - p["x0"]) ** p["s"]
    if kind == "table":
        return np.interp(x, p["x"], p["y"])
    if kind == "expr":
        code = _compile_expr(p["expr"])
        val = eval(code, {"__builtins__": {}}, dict(_EXPR_NAMES, x=x))  # noqa: S307 - whitelisted AST
        return np.broadcast_to(np.asarray(val, float), x.shape).copy()
    if kind == "composite":
        out = np.full_like(x, p["coef"])
        with np.errstate(divide="ignore", invalid="ignore"):
            for f, k in p["factors"]:
                out = out * evaluate(f, x) ** k
        return out
    if kind == "pullback":
        return evaluate(p["base"], p["inverse"](x))
    if kind == "func":
        return np.asarray(p["fn"](x), float)
    raise ProfileError(f"unknown segment kind {kind!r}")


def _poly_vanishing_order(coeffs, t: float) -> int:
    c = np.asarray(coeffs, float)
    scale = max(np.max(np.abs(c)), 1e-300)
    # Taylor coefficients about t
    shifted = npoly.Polynomial(c)(npoly.Polynomial([t, 1.0])).coef
    for i, v in enumerate(shifted):
        if abs(v) > 1e-12 * scale * max(1.0, abs(t)) ** i:
            return i
    return len(shifted)


def exponent_at(seg: Segment, t: float) -> float:
    """Algebraic exponent ``e`` with ``seg(x) ~ |x - t|**e`` near ``t``."""
    kind, p = seg.kind, seg.params
    if kind in ("constant", "expr"):
        return 0.0
    if kind == "polynomial":
        return float(_poly_vanishing_order(p["coeffs"], t))
    if kind == "power":
        return p["s"] if abs(t - p["x0"]) <= 1e-14 * max(1.0, abs(t)) else 0.0
    if kind == "table":
        return 1.0 if float(np.interp(t, p["x"], p["y"])) == 0.0 else 0.0
    if kind == "composite":
        return float(sum(k * exponent_at(f, t) for f, k in p["factors"]))
    if kind == "pullback":
        xt = float(p["inverse"](np.asarray([t]))[0])
        e_base = exponent_at(p["base"], xt)
        e_map = p["map_exponent"](xt)
        return e_base / (1.0 + e_map)
    if kind == "func":
        fn = p.get("exponent")
        return float(fn(t)) if fn is not None else 0.0
    raise ProfileError(f"unknown segment kind {kind!r}")


def roughness_at(seg: Segment, t: float) -> float:
    """Smallest non-integer exponent of a non-leading term at ``t`` (``inf`` if none)."""
    kind, p = seg.kind, seg.params
    if kind == "func":
        fn = p.get("roughness")
        return float(fn(t)) if fn is not None else math.inf
    if kind == "composite":
        return min((roughness_at(f, t) for f, _ in p["factors"]), default=math.inf)
    if kind == "pullback":
        xt = float(p["inverse"](np.asarray([t]))[0])
        return roughness_at(p["base"], xt) / (1.0 + p["map_exponent"](xt))
    return math.inf


def grading_exponent(seg: Segment, t: float) -> float:
    e = exponent_at(seg, t)
    if is_singular_exponent(e):
        return e
    r = roughness_at(seg, t)
    return r if math.isfinite(r) else e


# ---- algebra --------------------------------------------------------------

def _factors(seg: Segment) -> tuple[float, list]:
    if seg.kind == "composite":
        return seg.params["coef"], list(seg.params["factors"])
    if seg.kind == "constant":
        return seg.params["value"], []
    return 1.0, [(seg, 1.0)]


def _simplify(coef: float, factors: list, span) -> Segment:
    # fold constants and same-centre power laws; drop zero exponents
    out: list = []
    powers: dict[float, list] = {}
    for f, k in factors:
        if k == 0:
            continue
        if f.kind == "constant":
            coef *= f.params["value"] ** k
        elif f.kind == "power":
            c = f.params["x0"]
            entry = powers.setdefault(c, [1.0, 0.0])
            entry[0] *= f.params["a"] ** k
            entry[1] += f.params["s"] * k
        else:
            out.append((f, k))
    for c, (a, s) in powers.items():
        coef *= a
        if s != 0:
            out.append((power(1.0, c, s, span), 1.0))
    if not out:
        return constant(coef, span)
    if len(out) == 1 and out[0][1] == 1.0 and out[0][0].kind == "power":
        f = out[0][0]
        return power(coef * f.params["a"], f.params["x0"], f.params["s"], span)
    if len(out) == 1 and out[0][1] == 1.0 and coef == 1.0:
        return out[0][0].with_span(*span)
    return Segment(tuple(span), "composite", {"coef": coef, "factors": tuple(out)})


def seg_pow(seg: Segment, k: float) -> Segment:
    coef, facs = _factors(seg)
    if coef < 0 and k != int(k):
        raise ProfileError("fractional power of a negative segment")
    return _simplify(coef ** k, [(f, e * k) for f, e in facs], seg.span)


def seg_mul(s1: Segment, s2: Segment) -> Segment:
    c1, f1 = _factors(s1)
    c2, f2 = _factors(s2)
    return _simplify(c1 * c2, f1 + f2, s1.span)


def seg_scale(seg: Segment, c: float) -> Segment:
    coef, facs = _factors(seg)
    return _simplify(coef * c, facs, seg.span)


def seg_add(s1: Segment, s2: Segment) -> Segment:
    if s1.kind == "constant" and s2.kind == "constant":
        return constant(s1.params["value"] + s2.params["value"], s1.span)
    if s1.is_zero:
        return s2.with_span(*s1.span)
    if s2.is_zero:
        return s1
    if s1.kind == "polynomial" or s2.kind == "polynomial":
        if s1.kind in ("polynomial", "constant") and s2.kind in ("polynomial", "constant"):
            c1 = s1.params.get("coeffs", [s1.params.get("value")])
            c2 = s2.params.get("coeffs", [s2.params.get("value")])
            return polynomial(npoly.polyadd(c1, c2), s1.span)
    a, b = s1.span
    e, rough = [], []
    for t in (a, b):
        parts = [exponent_at(s1, t), exponent_at(s2, t)]
        e.append(min(parts))
        # a non-integer exponent in either term leaves the sum non-smooth at t
        rough.append(min([x for x in parts if is_singular_exponent(x)]
                         + [roughness_at(s1, t), roughness_at(s2, t)]))

    def pick(t, vals, default):
        return vals[0] if abs(t - a) < 1e-14 else (vals[1] if abs(t - b) < 1e-14 else default)

    seg = func(lambda x, s1=s1, s2=s2: evaluate(s1, x) + evaluate(s2, x), s1.span,
               lambda t: pick(t, e, 0.0))
    seg.params["roughness"] = lambda t: pick(t, rough, math.inf)
    return seg


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

N_GAUSS = 8
N_JACOBI = 10


@functools.lru_cache(maxsize=512)
def _jacobi(n: int, alpha: float, beta: float):
    if alpha == 0.0 and beta == 0.0:
        return roots_legendre(n)
    return roots_jacobi(n, alpha, beta)


def cell_moments(seg: Segment, a, b, e_left: float = 0.0, e_right: float = 0.0, n: int | None = None):
    """Integrals ``int f`` and ``int (x - mid) f`` over cells ``[a_i, b_i]``.

    ``e_left``/``e_right`` are singular exponents of ``f`` at ``a``/``b``;
    they are absorbed exactly into a Gauss-Jacobi weight.
    """
    a = np.atleast_1d(np.asarray(a, float))
    b = np.atleast_1d(np.asarray(b, float))
    if seg.is_zero:
        z = np.zeros_like(a)
        return z, z.copy()
    if e_left <= -1 or e_right <= -1:
        raise IntegrabilityError(f"non-integrable exponent ({e_left}, {e_right}) on {seg.span}")
    if n is None:
        n = N_GAUSS if (e_left == 0 and e_right == 0) else N_JACOBI
    t, w = _jacobi(n, float(e_right), float(e_left))
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * t[None, :]
    vals = evaluate(seg, x)
    if e_left != 0 or e_right != 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            weight = np.abs(x - a[:, None]) ** e_left * np.abs(b[:, None] - x) ** e_right
            vals = vals / weight
        scale = half ** (1.0 + e_left + e_right)
    else:
        scale = half
    m0 = scale * (vals @ w)
    m1 = scale * half * ((vals * t[None, :]) @ w)
    return m0, m1


def is_singular_exponent(e: float) -> bool:
    """True unless ``|x - t|**e`` is a polynomial factor (nonnegative integer ``e``)."""
    return not (e >= 0 and float(e).is_integer())


def first_cell_fraction(e: float, mass_target: float = 1e-14) -> float:
    """Relative width of the innermost cell at an end with exponent ``e``."""
    return max(mass_target ** (1.0 / (1.0 + e)), 1e-300)


def _first_width(e: float, length: float, end: float) -> float:
    # keep the innermost cell resolvable in floating point next to a nonzero end
    return max(first_cell_fraction(e) * length, 512.0 * np.finfo(float).eps * abs(end))


def standoff(seg: Segment) -> tuple[float, float]:
    """Distances from the ends of ``seg`` to singular power-law centres just outside it.

    A factor ``|x - x0|**s`` with ``x0`` outside the span is smooth but can be
    arbitrarily steep; uniform cells then lose accuracy near the end closest
    to ``x0``.  Returns ``inf`` where there is no such centre.
    """
    a, b = seg.span
    dl = dr = math.inf
    _, facs = _factors(seg)
    for f, k in facs:
        if f.kind != "power" or not is_singular_exponent(f.params["s"] * k):
            continue
        x0 = f.params["x0"]
        if x0 <= a:
            dl = min(dl, a - x0) if a > x0 else dl
        elif x0 >= b:
            dr = min(dr, x0 - b) if x0 > b else dr
    return dl, dr


def _split(edges: np.ndarray, per_layer: int, max_width: float) -> np.ndarray:
    """Split each layer ``[edges[k], edges[k+1]]`` into equal cells no wider than ``max_width``."""
    pts = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi > lo:
            k = max(per_layer, int(math.ceil((hi - lo) / max_width)))
            pts.append(np.linspace(lo, hi, k + 1)[:-1])
    pts.append(edges[-1:])
    return np.concatenate(pts)


def _near_layers(zone: float, dist: float, per_layer: int, max_width: float = math.inf) -> np.ndarray:
    """Offsets ``0 < ... < zone`` whose cells grow like the distance ``dist + t``."""
    J = int(min(1100, max(1, math.ceil(math.log2((dist + zone) / dist)))))
    edges = np.minimum(dist * (2.0 ** np.arange(J + 1) - 1.0), zone)
    return _split(edges, per_layer, max_width)


def mesh_nodes(a: float, b: float, n: int, e_left: float = 0.0, e_right: float = 0.0,
               per_layer: int = 1, near_left: float = math.inf, near_right: float = math.inf) -> np.ndarray:
    """Uniform cells, with geometric layers towards singular ends.

    Next to an end whose exponent is singular, the quarter of the interval
    closest to it is covered by dyadic layers (each split into ``per_layer``
    cells) down to an innermost cell of relative width
    :func:`first_cell_fraction`.  Layer cells are also capped at the core cell width.  Every layer cell is no wider than its
    distance to the singular point, so Gauss rules stay accurate on it.
    ``near_left``/``near_right`` give the distance to a singular point just
    outside the interval (see :func:`standoff`); cells are graded towards it
    in the same way when it is closer than the zone width.
    """
    left = is_singular_exponent(e_left)
    right = is_singular_exponent(e_right)
    length = b - a
    zone = 0.25 * length
    per_near = max(2 * per_layer, 8)
    core_n = max(1, n)
    width = length / core_n
    parts = []
    lo, hi = a, b
    if left:
        lo = a + zone
        parts.append(a + _layers(zone, _first_width(e_left, length, a), per_layer, width))
    elif near_left < zone:
        lo = a + zone
        parts.append(a + _near_layers(zone, near_left, per_near, width))
    if right:
        hi = b - zone
        parts.append(b - _layers(zone, _first_width(e_right, length, b), per_layer, width)[::-1])
    elif near_right < zone:
        hi = b - zone
        parts.append(b - _near_layers(zone, near_right, per_near, width)[::-1])
    parts.append(np.linspace(lo, hi, max(1, int(round(core_n * (hi - lo) / length))) + 1))
    x = np.unique(np.concatenate(parts))
    x[0], x[-1] = a, b
    return x


def _layers(zone: float, first: float, per_layer: int, max_width: float = math.inf) -> np.ndarray:
    """Offsets ``0 < ... < zone`` of dyadic layers refined ``per_layer`` times."""
    J = int(min(1100, max(2, math.ceil(math.log2(zone / first)))))
    edges = zone * 2.0 ** -np.arange(J, -1, -1.0)
    return np.concatenate([[0.0], _split(edges, per_layer, max_width)])


def integrate_segment(seg: Segment, n: int = 64, absolute: bool = False) -> float:
    a, b = seg.span
    e_l, e_r = seg.exponents()
    if e_l <= -1 or e_r <= -1:
        raise IntegrabilityError(f"segment on {seg.span} has non-integrable exponent ({e_l}, {e_r})")
    nodes = mesh_nodes(a, b, n, *seg.grading_exponents(), 1, *standoff(seg))
    n = nodes.size - 1
    target = seg
    if absolute:
        target = func(lambda x, s=seg: np.abs(evaluate(s, x)), seg.span,
                      lambda t, s=seg: exponent_at(s, t))
    total = 0.0
    lo, hi = nodes[:-1], nodes[1:]
    m0, _ = cell_moments(target, lo[1:-1], hi[1:-1]) if n > 2 else (np.zeros(0), None)
    total += float(np.sum(m0))
    if n == 1:
        m, _ = cell_moments(target, lo[:1], hi[:1], e_l, e_r)
        return float(m[0])
    m, _ = cell_moments(target, lo[:1], hi[:1], e_l, 0.0)
    total += float(m[0])
    m, _ = cell_moments(target, lo[-1:], hi[-1:], 0.0, e_r)
    total += float(m[0])
    return total


# --------------------------------------------------------------------------
# profiles
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoefficientProfile:
    """A measurable scalar function on ``interval`` given segment by segment."""

    interval: tuple[float, float]
    segments: tuple[Segment, ...]

    def __post_init__(self):
        a, b = self.interval
        if not b > a:
            raise ProfileError(f"bad interval {self.interval}")
        segs = self.segments
        if not segs:
            raise ProfileError("profile needs at least one segment")
        if abs(segs[0].span[0] - a) > _tol(a, b) or abs(segs[-1].span[1] - b) > _tol(a, b):
            raise ProfileError("segments must start and end at the interval endpoints")
        for s1, s2 in zip(segs[:-1], segs[1:]):
            if abs(s1.span[1] - s2.span[0]) > _tol(a, b):
                raise ProfileError(f"gap or overlap between {s1.span} and {s2.span}")
        object.__setattr__(self, "_signs", tuple(_segment_sign(s) for s in segs))

    # ---- basic queries --------------------------------------------------
    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([s.span[0] for s in self.segments] + [self.segments[-1].span[1]])

    @property
    def length(self) -> float:
        return self.interval[1] - self.interval[0]

    @property
    def signs(self) -> tuple[int, ...]:
        return self._signs

    def segment_index(self, x) -> np.ndarray:
        idx = np.searchsorted(self.breakpoints[1:-1], np.asarray(x, float), side="right")
        return idx

    def __call__(self, x):
        x = np.asarray(x, float)
        out = np.empty_like(x)
        idx = self.segment_index(x)
        for i, seg in enumerate(self.segments):
            mask = idx == i
            if np.any(mask):
                out[mask] = evaluate(seg, x[mask])
        return out

    def is_constant(self) -> bool:
        return all(s.is_constant for s in self.segments) and len(
            {s.params["value"] for s in self.segments}) == 1

    # ---- algebra ----------------------------------------------------------
    def split(self, points) -> "CoefficientProfile":
        a, b = self.interval
        pts = sorted({float(p) for p in points if a + _tol(a, b) < p < b - _tol(a, b)})
        if not pts:
            return self
        segs: list[Segment] = []
        for seg in self.segments:
            lo, hi = seg.span
            cuts = [p for p in pts if lo + _tol(a, b) < p < hi - _tol(a, b)]
            edges = [lo] + cuts + [hi]
            segs.extend(seg.with_span(e0, e1) for e0, e1 in zip(edges[:-1], edges[1:]))
        return CoefficientProfile(self.interval, tuple(segs))

    def _binary(self, other: "CoefficientProfile", op) -> "CoefficientProfile":
        _check_same_interval(self, other)
        bp = np.union1d(self.breakpoints, other.breakpoints)
        p1 = self.split(bp)
        p2 = other.split(bp)
        p1_, p2_ = _align(p1, p2)
        return CoefficientProfile(self.interval, tuple(op(s1, s2) for s1, s2 in zip(p1_, p2_)))

    def __mul__(self, other):
        if isinstance(other, CoefficientProfile):
            return self._binary(other, seg_mul)
        return CoefficientProfile(self.interval, tuple(seg_scale(s, float(other)) for s in self.segments))

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, CoefficientProfile):
            return self._binary(other, seg_add)
        return self._binary(constant_profile(float(other), self.interval), seg_add)

    def __pow__(self, k: float):
        return CoefficientProfile(self.interval, tuple(seg_pow(s, float(k)) for s in self.segments))

    def reciprocal(self) -> "CoefficientProfile":
        return self ** -1.0

    # ---- integrability -----------------------------------------------------
    def integral(self, absolute: bool = False, n: int = 64) -> float:
        return float(sum(integrate_segment(s, n, absolute) for s in self.segments))

    def l1_certificate(self, name: str = "profile", rtol: float = 1e-6) -> float:
        """Return ``int |f|`` after checking two refinement levels agree."""
        for seg in self.segments:
            e_l, e_r = seg.exponents()
            if e_l <= -1 or e_r <= -1:
                raise IntegrabilityError(
                    f"{name} is not integrable on {seg.span}: exponents ({e_l:g}, {e_r:g})")
        coarse = self.integral(absolute=True, n=48)
        fine = self.integral(absolute=True, n=96)
        if not (np.isfinite(coarse) and np.isfinite(fine)):
            raise IntegrabilityError(f"{name}: quadrature did not produce a finite value")
        if abs(fine - coarse) > rtol * max(abs(fine), 1e-300) + 1e-300:
            raise IntegrabilityError(
                f"{name}: L1 quadrature unstable ({coarse:.12g} vs {fine:.12g})")
        return fine

    # ---- serialization ------------------------------------------------------
    def to_json(self) -> dict:
        return {"interval": list(self.interval), "segments": [s.to_json() for s in self.segments]}

    @classmethod
    def from_json(cls, obj: dict) -> "CoefficientProfile":
        try:
            interval = tuple(float(v) for v in obj["interval"])
            segs = []
            for s in obj["segments"]:
                kind = s["kind"]
                if kind not in SERIAL_KINDS:
                    raise ProfileError(f"unknown segment kind {kind!r}")
                span = tuple(float(v) for v in s["span"])
                params = dict(s.get("params", {}))
                if kind == "polynomial" and len(params["coeffs"]) == 1:
                    segs.append(constant(params["coeffs"][0], span))
                    continue
                if kind == "power":
                    params = {k: float(params[k]) for k in ("a", "x0", "s")}
                if kind == "constant":
                    params = {"value": float(params["value"])}
                seg = Segment(span, kind, params)
                declared = s.get("sign")
                if declared is not None and _segment_sign(seg) not in (int(declared), 0):
                    raise ProfileError(f"segment on {span} does not have declared sign {declared}")
                segs.append(seg)
        except (KeyError, TypeError) as exc:
            raise ProfileError(f"malformed profile JSON: {exc}") from exc
        return cls(interval, tuple(segs))


def _segment_sign(seg: Segment) -> int:
    a, b = seg.span
    xs = a + (b - a) * np.array([0.013, 0.11, 0.27, 0.5, 0.73, 0.89, 0.987])
    vals = evaluate(seg, xs)
    if not np.all(np.isfinite(vals)):
        raise ProfileError(f"segment on {seg.span} is not finite in its interior")
    if np.all(vals == 0):
        return 0
    if np.all(vals > 0):
        return 1
    if np.all(vals < 0):
        return -1
    raise ProfileError(f"segment on {seg.span} changes sign in its interior")


def _check_same_interval(p1: CoefficientProfile, p2: CoefficientProfile):
    a1, b1 = p1.interval
    a2, b2 = p2.interval
    if abs(a1 - a2) > _tol(a1, b1) or abs(b1 - b2) > _tol(a1, b1):
        raise ProfileError(f"profiles live on different intervals {p1.interval} vs {p2.interval}")


def _align(p1: CoefficientProfile, p2: CoefficientProfile):
    s1 = list(p1.segments)
    s2 = [seg.with_span(*ref.span) for seg, ref in zip(p2.segments, s1)]
    return s1, s2


def constant_profile(value: float, interval=(0.0, 1.0)) -> CoefficientProfile:
    return CoefficientProfile(tuple(map(float, interval)), (constant(value, interval),))


def polynomial_profile(coeffs, interval=(0.0, 1.0)) -> CoefficientProfile:
    return CoefficientProfile(tuple(map(float, interval)), (polynomial(coeffs, interval),))


def expr_profile(text: str, interval=(0.0, 1.0)) -> CoefficientProfile:
    return CoefficientProfile(tuple(map(float, interval)), (expr(text, interval),))


def power_profile(a: float, x0: float, s: float, interval=(0.0, 1.0)) -> CoefficientProfile:
    """``a |x - x0|**s`` on ``interval``, split at ``x0`` when it is interior."""
    lo, hi = map(float, interval)
    if lo < x0 < hi:
        segs = (power(a, x0, s, (lo, x0)), power(a, x0, s, (x0, hi)))
    else:
        segs = (power(a, x0, s, (lo, hi)),)
    return CoefficientProfile((lo, hi), segs)


def piecewise(pieces: Sequence[CoefficientProfile | Segment]) -> CoefficientProfile:
    """Concatenate profiles/segments living on adjacent intervals."""
    segs: list[Segment] = []
    for piece in pieces:
        segs.extend(piece.segments if isinstance(piece, CoefficientProfile) else (piece,))
    return CoefficientProfile((segs[0].span[0], segs[-1].span[1]), tuple(segs))


def restrict(profile: CoefficientProfile, a: float, b: float) -> CoefficientProfile:
    """Restriction of ``profile`` to the sub-interval ``[a, b]``."""
    p = profile.split([a, b])
    segs = tuple(s for s in p.segments if s.span[0] >= a - 1e-14 and s.span[1] <= b + 1e-14)
    return CoefficientProfile((float(a), float(b)), segs)


# --------------------------------------------------------------------------
# antiderivatives (used by the change of variables)
# --------------------------------------------------------------------------

class Antiderivative:
    """``F(x) = int_a^x f`` for a positive profile, with a monotone inverse."""

    def __init__(self, profile: CoefficientProfile, cells_per_segment: int = 96):
        if any(sgn <= 0 for sgn in profile.signs):
            raise ProfileError("antiderivative inverse needs a strictly positive profile")
        profile.l1_certificate("integrand")
        self.profile = profile
        nodes, masses, owner, e_left, e_right = [], [], [], [], []
        for si, seg in enumerate(profile.segments):
            a, b = seg.span
            el, er = seg.exponents()
            x = mesh_nodes(a, b, cells_per_segment, *seg.grading_exponents(), per_layer=2)
            n = len(x) - 1
            eL = np.zeros(n)
            eR = np.zeros(n)
            eL[0], eR[-1] = el, er
            m = np.empty(n)
            for j in range(n):
                m[j] = cell_moments(seg, x[j], x[j + 1], eL[j], eR[j])[0][0]
            nodes.append(x[:-1])
            masses.append(m)
            owner.append(np.full(n, si))
            e_left.append(eL)
            e_right.append(eR)
        self.left = np.concatenate(nodes)
        self.right = np.append(self.left[1:], profile.interval[1])
        self.owner = np.concatenate(owner)
        self.e_left = np.concatenate(e_left)
        self.e_right = np.concatenate(e_right)
        mass = np.concatenate(masses)
        self.cum = np.concatenate([[0.0], np.cumsum(mass)])
        self.total = float(self.cum[-1])

    def _partial(self, cell: np.ndarray, x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x)
        for c in np.unique(cell):
            mask = cell == c
            seg = self.profile.segments[self.owner[c]]
            lo = np.full(mask.sum(), self.left[c])
            hi = x[mask]
            ok = hi > lo
            vals = np.zeros(mask.sum())
            if np.any(ok):
                vals[ok] = cell_moments(seg, lo[ok], hi[ok], self.e_left[c], 0.0)[0]
            out[mask] = vals
        return out

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, float))
        a, b = self.profile.interval
        x = np.clip(x, a, b)
        cell = np.clip(np.searchsorted(self.left, x, side="right") - 1, 0, len(self.left) - 1)
        return self.cum[cell] + self._partial(cell, x)

    def density(self, x):
        return self.profile(x)

    def inverse(self, y):
        y = np.atleast_1d(np.asarray(y, float))
        y = np.clip(y, 0.0, self.total)
        cell = np.clip(np.searchsorted(self.cum, y, side="right") - 1, 0, len(self.left) - 1)
        lo = self.left[cell].copy()
        hi = self.right[cell].copy()
        # Newton inside the bracketing cell with bisection safeguard
        x = lo + (hi - lo) * np.where(
            self.cum[cell + 1] > self.cum[cell],
            (y - self.cum[cell]) / np.maximum(self.cum[cell + 1] - self.cum[cell], 1e-300), 0.5)
        for _ in range(60):
            f = self.cum[cell] + self._partial(cell, x) - y
            lo = np.where(f < 0, x, lo)
            hi = np.where(f > 0, x, hi)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = f / self.density(x)
            x_new = x - step
            bad = ~np.isfinite(x_new) | (x_new <= lo) | (x_new >= hi)
            x_new = np.where(bad, 0.5 * (lo + hi), x_new)
            done = np.abs(x_new - x) <= 4e-16 * np.maximum(1.0, np.abs(x))
            x = x_new
            if np.all(done):
                break
        return x
