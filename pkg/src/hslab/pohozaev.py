"""Pohozaev balance on a ball in normal coordinates.

For u on B_delta(0), metric g in normal coordinates, potential a and
multiplier lambda, with W(u) = X.grad u + (n-2)/2 u:

    B  = int_{|X|=delta} (X.nu)(|grad u|^2/2 - lambda/p u^p |X|^-s) - W(u) d_nu u
    C  = -int_B W(u) a u dX
    D1 = int (g^ij - delta^ij) X^l d_l u d_ij u        D2 = int g^ij X^l Gamma^k_ij d_l u d_k u
    D3 = int (g^ij - delta^ij) u d_ij u                D4 = int g^ij u Gamma^k_ij d_k u
    D  = D1 - D2 + (n-2)/2 (D3 - D4)

and B = C + D whenever Delta_g u + a u = lambda u^(p-1) |X|^-s in the ball
(Delta = -div grad).  For every u the flat part is the calculus identity
B = int W(u) (Delta_flat u - lambda u^(p-1) |X|^-s) dX.

Profiles are radial, so each volume integral factors into a radial integral
of u-data against angular averages of metric data; the angular averages are
taken with the product rule on S^(n-1) at every radial node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .bubbles import Bubble, ProblemParams, cns, l2_norm_squared
from .geometry import ManifoldModel, sphere_moment_quadrature
from .quadrature import ball_radial_nodes, integrate_radial, sphere_rule, sphere_volume

__all__ = [
    "RadialProfile",
    "PohozaevInput",
    "PohozaevReport",
    "pohozaev_terms",
    "calpha_asymptotic",
    "calpha_target",
    "log_moment_lemma",
    "log_moment_target",
    "dalpha_asymptotic",
    "dalpha_target",
    "n3_bound_check",
    "extrapolate",
    "UnresolvedError",
]


class UnresolvedError(ArithmeticError):
    """The product rule's error estimate exceeds the requested budget."""


@dataclass(frozen=True)
class RadialProfile:
    """u(X) = f(|X|) with first and second derivatives; ``scale`` is its feature size."""

    value: Callable
    d1: Callable
    d2: Callable
    scale: float = 1.0

    @classmethod
    def from_bubble(cls, b: Bubble):
        return cls(b.radial, b.radial_d1, b.radial_d2, b.scale)

    @classmethod
    def from_solve(cls, result):
        """Cubic-spline transplant of a radial solve: u_hat(X) = u(theta = |X|)."""
        cs = CubicSpline(result.theta, result.u, bc_type=((1, 0.0), (1, 0.0)))
        d1, d2 = cs.derivative(1), cs.derivative(2)
        return cls(cs, d1, d2, result.mu * Bubble(result.params).K)

    @classmethod
    def from_function(cls, f, df, d2f, scale=1.0):
        return cls(f, df, d2f, scale)


@dataclass(frozen=True)
class PohozaevInput:
    params: ProblemParams
    metric: ManifoldModel
    u_hat: RadialProfile
    a_hat: float | Callable = 0.0
    lam: float = 0.0
    delta: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        if self.metric.n != self.params.n:
            raise ValueError("metric and problem dimensions differ")
        if not (0 < self.delta <= self.metric.delta) and self.metric.kind != "torus":
            raise ValueError("the ball B_delta(0) must lie inside the chart")


@dataclass
class PohozaevReport:
    B: float
    C: float
    D: float
    D1: float
    D2: float
    D3: float
    D4: float
    errors: dict
    identity_residual: float
    volume_flat: float
    flat_residual: float

    def as_dict(self):
        d = {k: getattr(self, k) for k in ("B", "C", "D", "D1", "D2", "D3", "D4", "identity_residual", "volume_flat", "flat_residual")}
        d["errors"] = dict(self.errors)
        return d


def _potential(a, r):
    if callable(a):
        return np.asarray(a(r), dtype=float) * np.ones_like(r)
    return float(a) * np.ones_like(r)


def _angular_averages(model, r, degree, chunk=64, symmetric=None):
    """A1 = int (g^-1 - I)_ij s_i s_j,  A2 = int tr(g^-1 - I) - A1,  A3 = int g^ij Gamma^k_ij s_k.

    For rotationally symmetric models (g(QX) = Q g(X) Q^T) each integrand is
    constant on the sphere, so the product rule returns omega_{n-1} times its
    value in one direction; ``symmetric=False`` forces the full rule.
    """
    n = model.n
    if model.kind == "torus":
        z = np.zeros_like(r)
        return z, z, z
    if symmetric is None:
        symmetric = model.kind == "sphere"
    if symmetric:
        pts = np.eye(n)[:1]
        w = np.array([sphere_volume(n)])
    else:
        pts, w = sphere_rule(n, degree)
    A1 = np.empty_like(r)
    A2 = np.empty_like(r)
    A3 = np.empty_like(r)
    eye = np.eye(n)
    for i0 in range(0, len(r), chunk):
        rr = r[i0:i0 + chunk]
        X = rr[:, None, None] * pts[None, :, :]          # (chunk, m, n)
        ginv = model.metric_inverse(X)
        gam = model.christoffel(X)                      # [..., k, i, j]
        dev = ginv - eye
        a1 = np.einsum("cmij,mi,mj->cm", dev, pts, pts, optimize=True)
        tr = np.einsum("cmii->cm", dev)
        contr = np.einsum("cmij,cmkij,mk->cm", ginv, gam, pts, optimize=True)
        A1[i0:i0 + chunk] = a1 @ w
        A2[i0:i0 + chunk] = tr @ w - a1 @ w
        A3[i0:i0 + chunk] = contr @ w
    return A1, A2, A3


def _terms_at_level(inp, level, degree, symmetric=None):
    n, s = inp.params.n, inp.params.s
    p = inp.params.two_star_s
    omega = sphere_volume(n)
    delta = inp.delta
    r, wr = ball_radial_nodes(delta, min(inp.u_hat.scale, delta), level)
    u = np.asarray(inp.u_hat.value(r), dtype=float)
    du = np.asarray(inp.u_hat.d1(r), dtype=float)
    d2u = np.asarray(inp.u_hat.d2(r), dtype=float)
    jac = wr * r ** (n - 1)
    Wu = r * du + 0.5 * (n - 2) * u
    a = _potential(inp.a_hat, r)
    C = -omega * float(np.sum(jac * Wu * a * u))
    lap_flat = -d2u - (n - 1) * du / r
    V = omega * float(np.sum(jac * Wu * (lap_flat - inp.lam * u ** (p - 1) * r ** (-s))))
    A1, A2, A3 = _angular_averages(inp.metric, r, degree, symmetric=symmetric)
    hess_dev = d2u * A1 + du / r * A2   # (g^ij - delta^ij) d_ij u, angularly integrated
    D1 = float(np.sum(jac * r * du * hess_dev))
    D2 = float(np.sum(jac * r * du**2 * A3))
    D3 = float(np.sum(jac * u * hess_dev))
    D4 = float(np.sum(jac * u * du * A3))
    return C, V, D1, D2, D3, D4


def _boundary_term(inp):
    n, s = inp.params.n, inp.params.s
    p = inp.params.two_star_s
    d = inp.delta
    u = float(inp.u_hat.value(np.array([d]))[0])
    du = float(inp.u_hat.d1(np.array([d]))[0])
    bracket = d * (0.5 * du**2 - inp.lam / p * u**p * d ** (-s)) - (d * du + 0.5 * (n - 2) * u) * du
    return sphere_volume(n) * d ** (n - 1) * bracket


def pohozaev_terms(inp, level=7, degree=8, budget=None, symmetric=None):
    """All Pohozaev terms for a radial profile; errors from the difference of two levels.

    ``degree`` is the polynomial exactness of the angular rule.  ``budget``
    (absolute) raises :class:`UnresolvedError` when any error estimate
    exceeds it.
    """
    n = inp.params.n
    hi = _terms_at_level(inp, level, degree, symmetric)
    lo = _terms_at_level(inp, level - 1, degree, symmetric)
    C, V, D1, D2, D3, D4 = hi
    names = ("C", "volume_flat", "D1", "D2", "D3", "D4")
    errors = {k: abs(x - y) for k, x, y in zip(names, hi, lo)}
    D = D1 - D2 + 0.5 * (n - 2) * (D3 - D4)
    errors["D"] = errors["D1"] + errors["D2"] + 0.5 * (n - 2) * (errors["D3"] + errors["D4"])
    B = _boundary_term(inp)
    errors["B"] = 0.0
    if budget is not None and max(errors.values()) > budget:
        raise UnresolvedError(f"quadrature error {max(errors.values()):.3e} exceeds budget {budget:.3e}")
    return PohozaevReport(
        B=B, C=C, D=D, D1=D1, D2=D2, D3=D3, D4=D4, errors=errors,
        identity_residual=abs(C + D - B), volume_flat=V, flat_residual=abs(B - V),
    )


# -- ladder fits ---------------------------------------------------------------------

def extrapolate(x, y, degree=None):
    """Polynomial extrapolation of samples y(x) to x = 0 (intercept, spread of lower-order fit)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise ValueError("need at least three ladder points for a stable fit")
    deg = len(x) - 1 if degree is None else degree
    c = np.polynomial.polynomial.polyfit(x, y, deg)
    c_lo = np.polynomial.polynomial.polyfit(x, y, deg - 1)
    return float(c[0]), float(abs(c[0] - c_lo[0]))


def _ladder_abscissa(n, mu):
    mu = np.asarray(mu, dtype=float)
    return 1.0 / np.log(1.0 / mu) if n == 4 else mu


def _ladder_normalizer(n, mu):
    mu = np.asarray(mu, dtype=float)
    return mu**2 * np.log(1.0 / mu) if n == 4 else mu**2


def calpha_target(params, a_const):
    """a int u~^2 (n >= 5) or a omega_3 K^4 (n = 4)."""
    b = Bubble(params)
    if params.n == 4:
        return a_const * b.omega_nm1 * b.K**4
    return a_const * l2_norm_squared(params)


def calpha_asymptotic(params, a_const, mu_ladder, delta=1.0, return_samples=False):
    """Fitted limit of C/mu^2 (n >= 5) or C/(mu^2 ln(1/mu)) (n = 4) along the bubble family.

    C is evaluated on flat space with the constant potential ``a_const``; the
    ladder is extrapolated by a polynomial in mu (n >= 5) or 1/ln(1/mu)
    (n = 4).
    """
    n = params.n
    if n < 4:
        raise ValueError("C/mu^2 has a finite limit only for n >= 4")
    mu = np.sort(np.asarray(mu_ladder, dtype=float))[::-1]
    if len(mu) < 3:
        raise ValueError("need at least three ladder points for a stable fit")
    vals = []
    for m in mu:
        b = Bubble.rescaled(params, m)
        Wu = lambda r: r * b.radial_d1(r) + 0.5 * (n - 2) * b.radial(r)
        v, _ = integrate_radial(lambda r: Wu(r) * b.radial(r) * r ** (n - 1), hi=delta, scale=b.scale, rtol=1e-12)
        vals.append(-a_const * sphere_volume(n) * v)
    vals = np.array(vals)
    y = vals / _ladder_normalizer(n, mu)
    slope, err = extrapolate(_ladder_abscissa(n, mu), y)
    if return_samples:
        return slope, err, mu, vals
    return slope


def log_moment_target(params, idx):
    b = Bubble(params)
    return ((params.n - 2) * b.K ** (params.n - 2)) ** 2 * sphere_moment_quadrature(params.n, *idx)


def log_moment_lemma(params, idx, mu_ladder, delta=1.0, return_samples=False):
    """Fitted limit of int_{B_{delta/mu}} X^b1 X^b2 d_i u d_j u dX / ln(1/mu) for n = 4.

    ``idx = (i, j, b1, b2)`` (1-based).  The angular factor comes from the
    product rule; the radial factor by quadrature; the ladder is
    extrapolated in 1/ln(1/mu).
    """
    if params.n != 4:
        raise ValueError("the logarithmic moment lemma is stated for n = 4")
    i, j, b1, b2 = idx
    n = params.n
    ang = sphere_moment_quadrature(n, i, j, b1, b2)
    b = Bubble(params)
    mu = np.sort(np.asarray(mu_ladder, dtype=float))[::-1]
    if len(mu) < 3:
        raise ValueError("need at least three ladder points for a stable fit")
    rad = []
    for m in mu:
        v, _ = integrate_radial(lambda r: r ** (n + 1) * b.radial_d1(r) ** 2, hi=delta / m, scale=b.K, rtol=1e-12)
        rad.append(v)
    vals = ang * np.array(rad)
    y = vals / np.log(1.0 / mu)
    slope, err = extrapolate(1.0 / np.log(1.0 / mu), y)
    if return_samples:
        return slope, err, mu, vals
    return slope


def dalpha_target(params, scal):
    """-c_{n,s} Scal int u~^2 (n >= 5) or -(1/6) Scal omega_3 K^4 (n = 4)."""
    b = Bubble(params)
    if params.n == 4:
        return -scal * b.omega_nm1 * b.K**4 / 6.0
    return -cns(params) * scal * l2_norm_squared(params)


def dalpha_asymptotic(manifold, solve_ladder, delta=None, level=7, degree=8, return_samples=False):
    """Fitted limit of D/mu^2 (n >= 5) or D/(mu^2 ln(1/mu)) (n = 4) along a ladder of radial solves.

    Each solve is transplanted to normal coordinates on ``manifold``
    (u_hat(X) = u(|X|)) and D is evaluated on B_delta(0).
    """
    if len(solve_ladder) < 3:
        raise ValueError("need at least three solves for a stable fit")
    n = manifold.n
    delta = manifold.delta if delta is None else delta
    ladder = sorted(solve_ladder, key=lambda r: -r.mu)
    mu = np.array([r.mu for r in ladder])
    vals = []
    for res in ladder:
        inp = PohozaevInput(res.params, manifold, RadialProfile.from_solve(res), res.a or 0.0, res.lam, delta, res.mu)
        vals.append(pohozaev_terms(inp, level, degree).D)
    vals = np.array(vals)
    y = vals / _ladder_normalizer(n, mu)
    slope, err = extrapolate(_ladder_abscissa(n, mu), y)
    if return_samples:
        return slope, err, mu, vals
    return slope


def n3_bound_check(params, a_const, mu_ladder, delta=0.5, metric=None, level=7):
    """max over the ladder of |C + D| / (delta mu) for the bubble family (n = 3).

    Returns ``(max_ratio, ratios)``.
    """
    if params.n != 3:
        raise ValueError("this bound concerns n = 3")
    metric = ManifoldModel.torus(3, delta=max(delta, 0.5)) if metric is None else metric
    ratios = []
    for m in mu_ladder:
        b = Bubble.rescaled(params, m)
        inp = PohozaevInput(params, metric, RadialProfile.from_bubble(b), a_const, b.mu_s, delta, m)
        rep = pohozaev_terms(inp, level)
        ratios.append(abs(rep.C + rep.D) / (delta * m))
    return max(ratios), ratios
