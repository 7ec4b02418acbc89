"""Double-exponential quadrature on radial intervals and product rules on spheres.

Radial integrals in this package all look like ``r^(a) * (1 + r^(2-s))^(-b)``
possibly multiplied by smooth factors, with an algebraic singularity at the
origin and an algebraic tail.  Two double-exponential maps cover them:

* tanh-sinh on a finite interval ``[lo, hi]`` (endpoint singularities are
  integrated at full accuracy as long as the singular endpoint is ``lo = 0``);
* exp-sinh on ``(0, inf)``, i.e. the substitution ``rho = ln r`` followed by a
  sinh map, which turns both the ``r^(-s)`` singularity and the algebraic
  tail into doubly-exponentially decaying integrands.

The angular rule on ``S^(n-1)`` is a Gauss-Gegenbauer product rule built
recursively from ``S^(m) = [-1, 1] x S^(m-1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, roots_jacobi

_T_MAX = 4.5  # |t| cut-off for DE rules; logistic tails are ~1e-61 there


class QuadratureError(RuntimeError):
    """Raised when an adaptive rule does not reach its tolerance."""

    def __init__(self, message, value, error):
        super().__init__(f"{message} (value={value!r}, error estimate={error:.3e})")
        self.value = value
        self.error = error


def sphere_volume(n):
    """Return omega_{n-1}, the (n-1)-volume of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _logistic(z):
    # sigma(z) = 1/(1+exp(-z)) evaluated without overflow
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _level_abscissae(level):
    """Parameter values t added at a given refinement level (h = 2**-level)."""
    h = 2.0**-level
    if level == 0:
        k = np.arange(-int(_T_MAX), int(_T_MAX) + 1)
        return k.astype(float), h
    m = int(math.ceil(_T_MAX / h))
    k = np.arange(-m, m + 1)
    k = k[k % 2 != 0]
    return k * h, h


def tanh_sinh_nodes(lo, hi, t):
    """Map parameter values ``t`` to nodes/Jacobians on ``[lo, hi]``.

    Nodes are computed as distances from the nearer endpoint so that points
    crowding ``lo = 0`` keep full relative precision.
    """
    L = hi - lo
    z = math.pi * np.sinh(t)
    left = L * _logistic(z)          # x - lo
    right = L * _logistic(-z)        # hi - x
    x = np.where(t <= 0, lo + left, hi - right)
    jac = L * math.pi * np.cosh(t) * _logistic(z) * _logistic(-z)
    return x, jac


def exp_sinh_nodes(scale, t):
    """Nodes/Jacobians of the map r = scale * exp(pi/2 sinh t) onto (0, inf)."""
    v = 0.5 * math.pi * np.sinh(t)
    v = np.clip(v, -700.0, 700.0)
    r = scale * np.exp(v)
    jac = r * 0.5 * math.pi * np.cosh(t)
    return r, jac


@dataclass(frozen=True)
class RadialQuadrature:
    """Adaptive double-exponential rule for one-dimensional radial integrals.

    ``kind`` is ``"tanh-sinh"`` for a finite interval or ``"exp-sinh"`` for the
    half line.  Refinement halves the step until two successive levels agree
    to ``max(atol, rtol * |I|)``; that difference is the reported error
    (a pessimistic estimate, the rules converge quadratically).
    """

    kind: str = "tanh-sinh"
    rtol: float = 1e-13
    atol: float = 0.0
    max_level: int = 9
    min_level: int = 3

    def integrate(self, f, lo=0.0, hi=math.inf, scale=1.0, strict=False):
        """Return ``(value, error_estimate, n_evaluations)`` for the integral of ``f``.

        ``f`` must accept numpy arrays.  With ``strict`` a tolerance miss raises
        :class:`QuadratureError`; otherwise the best value is returned with its
        error estimate.
        """
        kind = "exp-sinh" if math.isinf(hi) else self.kind
        if kind == "exp-sinh" and lo != 0.0:
            raise ValueError("exp-sinh rule integrates over (0, inf) only")

        running = 0.0
        prev = None
        n_eval = 0
        err = math.inf
        for level in range(self.max_level + 1):
            t, h = _level_abscissae(level)
            if kind == "exp-sinh":
                x, jac = exp_sinh_nodes(scale, t)
            else:
                x, jac = tanh_sinh_nodes(lo, hi, t)
            keep = jac > 0.0
            vals = np.asarray(f(x[keep]), dtype=float) * jac[keep]
            n_eval += int(keep.sum())
            running += float(np.sum(vals))
            estimate = running * h
            if prev is not None:
                err = abs(estimate - prev)
                if level >= self.min_level and err <= max(self.atol, self.rtol * abs(estimate)):
                    return estimate, err, n_eval
            prev = estimate
        if strict:
            raise QuadratureError("radial quadrature did not converge", prev, err)
        return prev, err, n_eval

    def nodes(self, lo=0.0, hi=math.inf, scale=1.0, level=6):
        """Fixed nodes/weights of the composite rule at one refinement level."""
        ts = [_level_abscissae(k)[0] for k in range(level + 1)]
        t = np.sort(np.concatenate(ts))
        h = 2.0**-level
        if math.isinf(hi):
            x, jac = exp_sinh_nodes(scale, t)
        else:
            x, jac = tanh_sinh_nodes(lo, hi, t)
        keep = jac > 0.0
        return x[keep], h * jac[keep]


def integrate_radial(f, hi=math.inf, scale=1.0, rtol=1e-13, atol=0.0, strict=False):
    """Integrate ``f(r)`` over ``(0, hi)`` for integrands with a feature at ``scale``.

    Finite ranges are split at ``scale``: tanh-sinh on ``[0, scale]`` and
    tanh-sinh in ``rho = ln r`` on ``[ln scale, ln hi]``.  Returns
    ``(value, error_estimate)``.
    """
    rule = RadialQuadrature(rtol=rtol, atol=atol)
    if math.isinf(hi):
        v, e, _ = rule.integrate(f, 0.0, math.inf, scale=scale, strict=strict)
        return v, e
    cut = min(scale, hi)
    v1, e1, _ = rule.integrate(f, 0.0, cut, strict=strict)
    if cut >= hi:
        return v1, e1
    g = lambda rho: f(np.exp(rho)) * np.exp(rho)
    v2, e2, _ = rule.integrate(g, math.log(cut), math.log(hi), strict=strict)
    return v1 + v2, e1 + e2


def ball_radial_nodes(delta, scale, level=6):
    """Nodes/weights for ``int_0^delta f(r) dr``, resolving a feature at ``scale``.

    Same split as :func:`integrate_radial`, at a fixed refinement level, for
    use inside product rules.
    """
    rule = RadialQuadrature()
    cut = min(scale, delta)
    x1, w1 = rule.nodes(0.0, cut, level=level)
    if cut >= delta:
        return x1, w1
    rho, w2 = rule.nodes(math.log(cut), math.log(delta), level=level)
    x2 = np.exp(rho)
    return np.concatenate([x1, x2]), np.concatenate([w1, w2 * x2])


@lru_cache(maxsize=None)
def _sphere_rule_cached(n, degree):
    if n == 1:
        raise ValueError("sphere rule needs n >= 2")
    if n == 2:
        m = degree + 1
        phi = 2.0 * math.pi * np.arange(m) / m
        pts = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        w = np.full(m, 2.0 * math.pi / m)
        return pts, w
    # S^(n-1) = {(t, sqrt(1-t^2) y) : y in S^(n-2)}, measure (1-t^2)^((n-3)/2) dt dsigma
    k = degree // 2 + 1
    alpha = (n - 3) / 2.0
    t, wt = roots_jacobi(k, alpha, alpha)
    sub_pts, sub_w = _sphere_rule_cached(n - 1, degree)
    rad = np.sqrt(1.0 - t**2)
    pts = np.concatenate(
        [np.column_stack([np.full(sub_pts.shape[0], ti), ri * sub_pts]) for ti, ri in zip(t, rad)]
    )
    w = np.concatenate([wi * sub_w for wi in wt])
    return pts, w


def sphere_rule(n, degree=7):
    """Product rule on ``S^(n-1)`` exact for polynomials of total degree ``<= degree``.

    Returns ``(points, weights)`` with ``points`` of shape ``(m, n)``; the
    weights sum to :func:`sphere_volume`.
    """
    pts, w = _sphere_rule_cached(int(n), int(degree))
    return pts.copy(), w.copy()


def sphere_monomial_integral(exponents):
    """Exact integral of ``prod x_i^k_i`` over the unit sphere (Folland's formula)."""
    e = np.asarray(exponents, dtype=int)
    if np.any(e % 2):
        return 0.0
    b = (e + 1) / 2.0
    return float(2.0 * np.exp(np.sum(gammaln(b)) - gammaln(np.sum(b))))
