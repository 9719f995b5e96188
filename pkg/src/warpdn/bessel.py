"""Modified Bessel functions ``I_nu`` and ``K_nu`` of real order.

``I_nu`` uses the ascending series (positive terms, summed with
``math.fsum``) below a crossover and the Hankel large-argument expansion
above it.  ``K_nu`` uses Temme's series for ``x <= 2`` and Steed's
continued fraction above, followed by upward recurrence in the order; this
avoids the cancellation of ``pi (I_-nu - I_nu) / (2 sin nu pi)``, which is
still provided as :func:`bessel_k_reflection` for cross-checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "bessel_i", "bessel_k", "bessel_i_series", "bessel_i_asymptotic", "bessel_k_reflection",
    "bessel_ip", "bessel_kp", "crossover", "bessel_bounds_check", "BesselReport",
    "NU_MAX", "X_MAX",
]

NU_MAX = 50.0
X_MAX = 700.0
CROSS_MIN = 30.0
_EPS = 1e-17
_MAXIT = 20000

# Taylor coefficients of 1/Gamma(z) about 0 (1/Gamma(z) = sum c_k z^k, k >= 1)
_RGAMMA = (
    1.0, 0.5772156649015329, -0.6558780715202538, -0.0420026350340952, 0.1665386113822915,
    -0.0421977345555443, -0.0096219715278770, 0.0072189432466630, -0.0011651675918591,
    -0.0002152416741149, 0.0001280502823882, -0.0000201348547807, -0.0000012504934821,
    0.0000011330272320, -0.0000002056338417, 0.0000000061160950, 0.0000000050020075,
    -0.0000000011812746, 0.0000000001043427, 0.0000000000077823, -0.0000000000036968,
    0.0000000000005100, -0.0000000000000206, -0.0000000000000054, 0.0000000000000014,
    0.0000000000000001,
)


def _check(nu: float, x: float, allow_negative_order: bool = False):
    if not (math.isfinite(nu) and math.isfinite(x)):
        raise DomainError(f"non-finite Bessel argument (nu={nu}, x={x})")
    lo = -NU_MAX if allow_negative_order else 0.0
    if not lo <= nu <= NU_MAX:
        raise DomainError(f"order nu={nu} outside [{lo:g}, {NU_MAX:g}]")
    if not 0.0 <= x <= X_MAX:
        raise DomainError(f"argument x={x} outside [0, {X_MAX:g}]")


def crossover(nu: float) -> float:
    """Argument above which the Hankel expansion replaces the series."""
    return max(CROSS_MIN, 1.5 * nu * nu)


# --------------------------------------------------------------------------
# I_nu
# --------------------------------------------------------------------------

def bessel_i_series(nu: float, x: float) -> float:
    """Ascending series ``sum (x/2)**(2k+nu) / (k! Gamma(k+nu+1))``."""
    if x == 0.0:
        if nu == 0.0:
            return 1.0
        return 0.0 if nu > 0 or nu == int(nu) else math.inf
    if nu < 0 and nu == int(nu):
        nu = -nu                                   # I_{-n} = I_n
    half = 0.5 * x
    q = half * half
    # first term (x/2)**nu / Gamma(nu+1), computed in logs when large
    lg = nu * math.log(half) - math.lgamma(nu + 1.0)
    sign = 1.0 if nu + 1.0 > 0 or math.floor(nu + 1.0) % 2 == 0 else -1.0
    t = sign * math.exp(lg)
    terms = [t]
    k = 1
    while k < _MAXIT:
        t *= q / (k * (k + nu))
        terms.append(t)
        if abs(t) < _EPS * abs(terms[0]) and k > half or t == 0.0:
            break
        if abs(t) < _EPS * abs(math.fsum(terms)) and k > half:
            break
        k += 1
    return math.fsum(terms)


def bessel_i_asymptotic(nu: float, x: float) -> float:
    """Hankel expansion ``e^x / sqrt(2 pi x) sum (-1)^k a_k(nu) / x^k``.

    Summed until the terms stop decreasing; accurate when ``x`` is well above
    ``nu**2``.
    """
    mu4 = 4.0 * nu * nu
    term = 1.0
    acc = [1.0]
    k = 1
    while k < 200:
        new = -term * (mu4 - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(new) >= abs(term) or new == 0.0:
            break
        acc.append(new)
        term = new
        if abs(term) < _EPS:
            break
        k += 1
    return math.exp(x) / math.sqrt(2.0 * math.pi * x) * math.fsum(acc)


def bessel_i(nu: float, x: float) -> float:
    """Modified Bessel function of the first kind ``I_nu(x)``.

    Domain ``0 <= nu <= 50`` (negative orders are accepted down to ``-50``),
    ``0 <= x <= 700``.
    """
    nu, x = float(nu), float(x)
    _check(nu, x, allow_negative_order=True)
    if x > crossover(nu):
        return bessel_i_asymptotic(nu, x)
    return bessel_i_series(nu, x)


def bessel_ip(nu: float, x: float) -> float:
    """``I_nu'(x) = I_{nu+1}(x) + (nu/x) I_nu(x)``."""
    if x == 0.0:
        if nu == 1.0:
            return 0.5
        return 0.0 if nu > 1 or nu == 0 else math.inf
    return bessel_i(nu + 1.0, x) + nu / x * bessel_i(nu, x)


# --------------------------------------------------------------------------
# K_nu
# --------------------------------------------------------------------------

def _gamma_pair(mu: float) -> tuple[float, float, float, float]:
    """``gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu)`` for ``|mu| <= 1/2``.

    ``gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu)`` and
    ``gam2 = (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2`` from the Taylor series,
    without cancellation at small ``mu``.
    """
    gam1 = 0.0
    gam2 = 0.0
    for k, c in enumerate(_RGAMMA, start=1):
        if k % 2 == 0:
            gam1 -= c * mu ** (k - 2)
        else:
            gam2 += c * mu ** (k - 1)
    return gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1


def _k_temme(mu: float, x: float) -> tuple[float, float]:
    """``K_mu(x), K_{mu+1}(x)`` by Temme's series (``x <= 2``)."""
    x2 = 0.5 * x
    pimu = math.pi * mu
    fact = 1.0 if abs(pimu) < 1e-16 else pimu / math.sin(pimu)
    d = -math.log(x2)
    e = mu * d
    fact2 = 1.0 if abs(e) < 1e-16 else math.sinh(e) / e
    gam1, gam2, gampl, gammi = _gamma_pair(mu)
    ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
    total = ff
    e = math.exp(e)
    p = 0.5 * e / gampl
    q = 0.5 / (e * gammi)
    c = 1.0
    d = x2 * x2
    total1 = p
    mu2 = mu * mu
    for i in range(1, _MAXIT):
        ff = (i * ff + p + q) / (i * i - mu2)
        c *= d / i
        p /= i - mu
        q /= i + mu
        delta = c * ff
        total += delta
        total1 += c * (p - i * ff)
        if abs(delta) < abs(total) * 1e-17:
            break
    return total, total1 * 2.0 / x


def _k_steed(mu: float, x: float) -> tuple[float, float]:
    """``K_mu(x), K_{mu+1}(x)`` by Steed's continued fraction (``x > 2``)."""
    mu2 = mu * mu
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25 - mu2
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, _MAXIT):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < 1e-17:
            break
    h = a1 * h
    kmu = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
    return kmu, kmu * (mu + x + 0.5 - h) / x


def bessel_k(nu: float, x: float) -> float:
    """Modified Bessel function of the second kind ``K_nu(x)``, ``x > 0``."""
    nu, x = abs(float(nu)), float(x)                # K_{-nu} = K_nu
    _check(nu, x)
    if x == 0.0:
        raise DomainError("K_nu is singular at x = 0")
    nl = int(nu + 0.5)
    mu = nu - nl
    kmu, k1 = _k_temme(mu, x) if x <= 2.0 else _k_steed(mu, x)
    for i in range(1, nl + 1):
        kmu, k1 = k1, (mu + i) * (2.0 / x) * k1 + kmu
        if not math.isfinite(k1):
            raise DomainError(f"K_{nu}({x}) overflows")
    if not math.isfinite(kmu):
        raise DomainError(f"K_{nu}({x}) overflows")
    return kmu


def bessel_kp(nu: float, x: float) -> float:
    """``K_nu'(x) = -K_{nu+1}(x) + (nu/x) K_nu(x)``."""
    return -bessel_k(nu + 1.0, x) + nu / x * bessel_k(nu, x)


def bessel_k_reflection(nu: float, x: float) -> float:
    """``pi (I_-nu(x) - I_nu(x)) / (2 sin(nu pi))`` for non-integer ``nu``.

    Loses about ``2x / ln 10`` digits to cancellation; intended for small
    arguments and cross-checks only.
    """
    if float(nu) == int(nu):
        raise DomainError("reflection formula needs a non-integer order")
    return math.pi * (bessel_i_series(-nu, x) - bessel_i_series(nu, x)) / (2.0 * math.sin(nu * math.pi))


# --------------------------------------------------------------------------
# inequality sweep
# --------------------------------------------------------------------------

@dataclass
class BesselReport:
    checked: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def bessel_bounds_check(nuGrid: Sequence[float], xGrid: Sequence[float], rtol: float = 1e-12) -> BesselReport:
    """Check ``I_nu(x)/I_nu(y) <= (x/y)**nu`` (``x < y``, ``nu > -1/2``) and
    ``|I_nu'(x)/I_nu(x)| <= 1 + nu/x`` (``nu > 0``) on all grid points."""
    rep = BesselReport()
    xs = sorted(float(x) for x in xGrid if x > 0)
    for nu in nuGrid:
        nu = float(nu)
        if nu <= -0.5:
            continue
        vals = {x: bessel_i(nu, x) for x in xs}
        for i, x in enumerate(xs):
            for y in xs[i + 1:]:
                if y <= x:
                    continue
                lhs = abs(vals[x] / vals[y])
                rhs = (x / y) ** nu
                rep.checked += 1
                if lhs > rhs * (1 + rtol):
                    rep.violations.append(("ratio", nu, x, y, lhs, rhs))
            if nu > 0:
                lhs = abs(bessel_i(nu + 1.0, x) / vals[x] + nu / x)
                rhs = 1.0 + nu / x
                rep.checked += 1
                if lhs > rhs * (1 + rtol):
                    rep.violations.append(("logderiv", nu, x, None, lhs, rhs))
    return rep


def bessel_i_array(nu: float, xs) -> np.ndarray:
    """``I_nu`` on an array of arguments."""
    xs = np.asarray(xs, float)
    return np.array([bessel_i(nu, x) for x in xs.ravel()]).reshape(xs.shape)
