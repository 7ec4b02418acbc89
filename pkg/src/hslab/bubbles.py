"""Hardy-Sobolev bubbles on R^n and the constants built from them.

The canonical profile is

    u(X) = (K^(2-s) / (K^(2-s) + |X|^(2-s)))^((n-2)/(2-s)),

with unit value at the origin and K fixed by K^(2-s) mu_s = (n-2)(n-s), so
that Delta u = mu_s u^(2*(s)-1) / |X|^s with Delta = -div grad and
int u^(2*(s)) |X|^-s dX = 1.  The best constant mu_s is computed as the
Rayleigh quotient of the profile; nothing here is tabulated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np

from .quadrature import QuadratureError, integrate_radial, sphere_volume

__all__ = [
    "ProblemParams",
    "Bubble",
    "IntegrabilityError",
    "critical_exponent",
    "cns",
    "cns_fraction",
    "best_constant_quadrature",
    "rayleigh_quotient",
    "normalization_check",
    "gamma_integral_identity",
    "rayleigh_ratio_identity",
    "rayleigh_ratio_exact",
    "pde_residual",
    "l2_norm_squared",
]

QUAD_RTOL = 1e-13


class IntegrabilityError(ValueError):
    """An integral requested over R^n diverges for the given dimension."""


@dataclass(frozen=True)
class ProblemParams:
    """Dimension ``n`` and singularity exponent ``s`` (``s = 0`` is the Sobolev case)."""

    n: int
    s: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"dimension must be an integer >= 3, got {self.n!r}")
        if not (0.0 <= self.s < 2.0):
            raise ValueError(f"s must lie in [0, 2), got {self.s!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "s", float(self.s))

    @property
    def two_star_s(self):
        return 2.0 * (self.n - self.s) / (self.n - 2)

    @property
    def decay(self):
        """Exponent (n-2)/(2-s) of the profile."""
        return (self.n - 2) / (2.0 - self.s)


def critical_exponent(params):
    """Hardy-Sobolev exponent 2(n-s)/(n-2)."""
    return params.two_star_s


def cns_fraction(n, s):
    """c_{n,s} as an exact fraction (``s`` is converted with ``Fraction``)."""
    s = Fraction(s).limit_denominator(10**6)
    return Fraction(n - 2) * (6 - s) / (12 * (2 * n - 2 - s))


def cns(params):
    """The curvature coefficient c_{n,s} = (n-2)(6-s) / (12(2n-2-s))."""
    n, s = params.n, params.s
    return (n - 2) * (6.0 - s) / (12.0 * (2 * n - 2 - s))


# -- unit-scale profile U(r) = (1 + r^(2-s))^(-(n-2)/(2-s)) and derivatives ---

def _profile(r, n, s, c=1.0):
    a = 2.0 - s
    t = (np.asarray(r, dtype=float) / c) ** a
    return (1.0 + t) ** (-(n - 2) / a)


def _profile_d1(r, n, s, c=1.0):
    a = 2.0 - s
    r = np.asarray(r, dtype=float)
    t = (r / c) ** a
    b = (n - 2) / a
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -(n - 2) * t / r * (1.0 + t) ** (-b - 1.0)
    return np.where(r == 0.0, 0.0 if a > 1 else -np.inf, out)


def _profile_d2(r, n, s, c=1.0):
    a = 2.0 - s
    r = np.asarray(r, dtype=float)
    t = (r / c) ** a
    b = (n - 2) / a
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -(n - 2) * t / r**2 * (1.0 + t) ** (-b - 2.0) * ((a - 1.0) * (1.0 + t) - (b + 1.0) * a * t)
    return out


def _log_profile(lr, n, s, c=1.0):
    """log U at ``lr = log r`` (no overflow for any r)."""
    a = 2.0 - s
    return -(n - 2) / a * np.logaddexp(0.0, a * (lr - math.log(c)))


def _log_abs_profile_d1(lr, n, s, c=1.0):
    """log |U'| at ``lr = log r``."""
    a = 2.0 - s
    x = a * (lr - math.log(c))
    return math.log(n - 2) + x - lr - ((n - 2) / a + 1.0) * np.logaddexp(0.0, x)


def _half_line(logf, s, c=1.0):
    """int_0^inf f(r) dr for a positive integrand given as ``logf(log r)``.

    The substitution ``r = c t^(1/(2-s))`` makes every power of the profile a
    rational function of ``t``, with an s-independent algebraic tail.  In
    ``r`` the same tail stretches over ~1/(2-s) decades and outruns the
    quadrature range as s approaches 2.  Working with logs keeps the large
    powers of ``r`` met along that tail finite.
    """
    k = 1.0 / (2.0 - s)
    lck = math.log(c * k)

    def g(t):
        lt = np.log(np.asarray(t, dtype=float))
        lr = math.log(c) + k * lt
        return np.exp(logf(lr) + lck + (k - 1.0) * lt)

    return integrate_radial(g, scale=1.0, rtol=QUAD_RTOL)

def rayleigh_quotient(params, c=1.0):
    """Rayleigh quotient of the unit-amplitude bubble of scale ``c``.

    Returns ``(quotient, error_estimate)``.  The value does not depend on ``c``.
    """
    n, s, p = params.n, params.s, params.two_star_s
    num, e1 = _half_line(lambda lr: 2 * _log_abs_profile_d1(lr, n, s, c) + (n - 1) * lr, s, c)
    den, e2 = _half_line(lambda lr: p * _log_profile(lr, n, s, c) + (n - 1 - s) * lr, s, c)
    w = sphere_volume(n)
    q = w * num / (w * den) ** (2.0 / p)
    err = q * (e1 / abs(num) + (2.0 / p) * e2 / abs(den))
    return q, err


@lru_cache(maxsize=256)
def _best_constant(n, s):
    return rayleigh_quotient(ProblemParams(n, s))


def best_constant_quadrature(params, strict=False, tol=1e-11):
    """mu_s(R^n) as the Rayleigh quotient of the explicit bubble.

    With ``strict`` a relative error estimate above ``tol`` raises
    :class:`~hslab.quadrature.QuadratureError`.
    """
    q, err = _best_constant(params.n, params.s)
    if strict and err > tol * q:
        raise QuadratureError("best constant quadrature did not converge", q, err)
    return q


@dataclass(frozen=True)
class Bubble:
    """Bubble ``(K/c0)^((n-2)/2) U((X - X0) K / c0)`` with ``U`` the canonical profile.

    ``c0 = None`` selects the canonical member (``c0 = K``, unit centre
    value).  Every member satisfies the same equation and normalisation when
    the weight is centred at ``X0``.
    """

    params: ProblemParams
    c0: float | None = None
    X0: tuple = field(default=None)

    def __post_init__(self):
        if self.X0 is None:
            object.__setattr__(self, "X0", (0.0,) * self.params.n)
        if len(self.X0) != self.params.n:
            raise ValueError("centre must have n coordinates")
        if self.c0 is not None and not self.c0 > 0:
            raise ValueError("scale c0 must be positive")

    @classmethod
    def rescaled(cls, params, mu):
        """Blow-up family mu^(-(n-2)/2) u(X/mu) (centre value mu^(-(n-2)/2))."""
        b = cls(params)
        return cls(params, c0=mu * b.K)

    @cached_property
    def mu_s(self):
        return best_constant_quadrature(self.params)

    @cached_property
    def K(self):
        n, s = self.params.n, self.params.s
        return ((n - 2) * (n - s) / self.mu_s) ** (1.0 / (2.0 - s))

    @property
    def scale(self):
        return self.K if self.c0 is None else self.c0

    @property
    def amplitude(self):
        return (self.K / self.scale) ** ((self.params.n - 2) / 2.0)

    @cached_property
    def omega_nm1(self):
        return sphere_volume(self.params.n)

    @cached_property
    def d_n(self):
        """mu_s times the integral of u^(2*(s)-1) |X|^-s (canonical member)."""
        lhs, _ = _weighted_power_integral(self.params, self.params.two_star_s - 1.0)
        return self.mu_s * lhs

    def radial(self, r):
        """Profile value as a function of the distance to the centre."""
        n, s = self.params.n, self.params.s
        return self.amplitude * _profile(r, n, s, self.scale)

    def radial_d1(self, r):
        n, s = self.params.n, self.params.s
        return self.amplitude * _profile_d1(r, n, s, self.scale)

    def radial_d2(self, r):
        n, s = self.params.n, self.params.s
        return self.amplitude * _profile_d2(r, n, s, self.scale)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        r = np.linalg.norm(X - np.asarray(self.X0), axis=-1)
        return self.radial(r)


def bubble_eval(b, X):
    """Value of bubble ``b`` at point(s) ``X``."""
    return b(X)


def _weighted_power_integral(params, q):
    """int_R^n u^q |X|^-s dX for the canonical bubble, by radial quadrature."""
    b = Bubble(params)
    n, s = params.n, params.s
    K = b.K
    v, e = _half_line(lambda lr: q * _log_profile(lr, n, s, K) + (n - 1 - s) * lr, s, K)
    w = b.omega_nm1
    return w * v, w * e


def normalization_check(b, tol=1e-8, strict=False):
    """Quadrature value of int u^(2*(s)) |X - X0|^-s dX (should equal 1).

    Returns ``(value, error_estimate)``.  With ``strict`` a miss of ``tol``
    raises :class:`~hslab.quadrature.QuadratureError`.
    """
    n, s, p = b.params.n, b.params.s, b.params.two_star_s
    v, e = _half_line(lambda lr: p * (math.log(b.amplitude) + _log_profile(lr, n, s, b.scale)) + (n - 1 - s) * lr, s, b.scale)
    v, e = b.omega_nm1 * v, b.omega_nm1 * e
    if strict and abs(v - 1.0) > tol:
        raise QuadratureError("normalisation integral differs from 1", v, e)
    return v, e


def normalization_scale(params):
    """K recovered from the normalisation condition alone (no mu_s involved)."""
    n, s, p = params.n, params.s, params.two_star_s
    v, _ = _half_line(lambda lr: p * _log_profile(lr, n, s) + (n - 1 - s) * lr, s)
    return (sphere_volume(n) * v) ** (-1.0 / (n - s))


def gamma_integral_identity(params):
    """``(lhs, rhs)`` for int u^(2*(s)-1) |X|^-s dX = K^(n-s) omega_{n-1} / (n-s)."""
    b = Bubble(params)
    lhs, _ = _weighted_power_integral(params, params.two_star_s - 1.0)
    rhs = b.K ** (params.n - params.s) * b.omega_nm1 / (params.n - params.s)
    return lhs, rhs


def l2_norm_squared(params):
    """int_R^n u^2 dX for the canonical bubble (finite only for n >= 5)."""
    n, s = params.n, params.s
    if n <= 4:
        raise IntegrabilityError(f"u^2 is not integrable on R^{n}")
    b = Bubble(params)
    v, _ = _half_line(lambda lr: 2 * _log_profile(lr, n, s, b.K) + (n - 1) * lr, s, b.K)
    return b.omega_nm1 * v


def rayleigh_ratio_exact(params):
    n, s = params.n, params.s
    return n * (n - 2) * (n + 2 - s) / (2.0 * (2 * n - 2 - s))


def rayleigh_ratio_identity(params):
    """``(lhs, rhs)``: int |X|^2 |grad u|^2 / int u^2 by quadrature vs closed form."""
    n, s = params.n, params.s
    if n <= 4:
        raise IntegrabilityError(f"u^2 and |X|^2 |grad u|^2 are not integrable on R^{n}")
    b = Bubble(params)
    K = b.K
    num, _ = _half_line(lambda lr: 2 * _log_abs_profile_d1(lr, n, s, K) + (n + 1) * lr, s, K)
    den, _ = _half_line(lambda lr: 2 * _log_profile(lr, n, s, K) + (n - 1) * lr, s, K)
    return num / den, rayleigh_ratio_exact(params)


def pde_residual(b, r):
    """Relative residual of Delta u = mu_s u^(2*(s)-1) / r^s at radius ``r``.

    Uses the closed-form radial derivatives, Delta u = -u'' - (n-1) u'/r.  For
    a non-canonical member the right-hand side carries the weight centred at
    ``X0``, which is where ``r`` is measured from.
    """
    n, s, p = b.params.n, b.params.s, b.params.two_star_s
    r = np.asarray(r, dtype=float)
    lap = -b.radial_d2(r) - (n - 1) * b.radial_d1(r) / r
    rhs = b.mu_s * b.radial(r) ** (p - 1) / r**s
    scale = np.abs(lap) + np.abs(rhs)
    return np.abs(lap - rhs) / np.where(scale > 0, scale, 1.0)
