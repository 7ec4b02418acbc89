"""Green's function of Delta_g + h on round spheres, and the mass at the pole in dimension 3.

The Green's function with pole x0 is radial in the geodesic distance theta
and solves

    -G'' - (n-1) cot(theta/R)/R G' + h G = 0,   0 < theta < pi R,

regular at the antipode.  The regular solution is integrated from the
antipode towards the pole.  Its scale follows from the flux identity:
integrating the equation over the sphere minus a small cap around x0 gives

    lim_{theta->0} -|S_theta| G'(theta) = int_M h G dv,

and the left side must be 1 for the delta normalisation.  The parametrix
behaviour theta^(n-2) G -> 1/((n-2) omega_{n-1}) is then a check, not an input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .geometry import ManifoldModel
from .quadrature import RadialQuadrature, sphere_volume

__all__ = [
    "GreenFunction",
    "MassReport",
    "solve_green",
    "mass",
    "mass_zero_root",
    "closed_form_green_s3",
    "closed_form_mass_s3",
    "delta_normalization_residual",
    "NoSignChangeError",
]


class NoSignChangeError(ValueError):
    """The mass has the same sign at both ends of the bracket."""


@dataclass
class GreenFunction:
    """Radial Green's function on the sphere; call it with geodesic distances."""

    manifold: ManifoldModel
    h: float | Callable
    theta_min: float
    scale: float                       # 1 / int h y dv for the raw regular solution
    _sol: object = field(repr=False)
    tail_integral: float = 0.0

    @property
    def n(self):
        return self.manifold.n

    @property
    def length(self):
        return math.pi * self.manifold.radius

    def _check(self, theta):
        theta = np.asarray(theta, dtype=float)
        if np.any(theta < self.theta_min * (1 - 1e-12)) or np.any(theta > self.length):
            raise ValueError(f"theta outside [{self.theta_min:g}, pi R]")
        return theta

    def _state(self, theta):
        theta = self._check(theta)
        th = np.minimum(theta, self._t_top)
        y, dy = self._sol(th)[:2]
        # within the seeding gap near the antipode use the regular series
        gap = theta > self._t_top
        if np.any(gap):
            phi = self.length - theta[gap]
            c2 = self._c2
            y = np.where(gap, 0.0, y)
            dy = np.where(gap, 0.0, dy)
            y[gap] = 1.0 + c2 * phi**2
            dy[gap] = -2.0 * c2 * phi
        return y, dy

    def __call__(self, theta):
        y, _ = self._state(theta)
        return self.scale * y

    def derivative(self, theta):
        _, dy = self._state(theta)
        return self.scale * dy

    def parametrix_ratio(self, theta):
        """theta^(n-2) G(theta) (n-2) omega_{n-1}; tends to 1 at the pole."""
        n = self.n
        return np.asarray(theta) ** (n - 2) * self(theta) * (n - 2) * sphere_volume(n)

    def ode_residual(self, theta, step=None):
        """Relative residual of the radial equation from the dense solution."""
        theta = np.asarray(theta, dtype=float)
        R = self.manifold.radius
        n = self.n
        step = 1e-4 * theta if step is None else step
        dy = lambda t: self._sol(t)[1]
        d2 = (-dy(theta + 2 * step) + 8 * dy(theta + step) - 8 * dy(theta - step) + dy(theta - 2 * step)) / (12 * step)
        y, d1 = self._sol(theta)[:2]
        hv = _potential(self.h, theta)
        lap = d2 + (n - 1) * d1 / (R * np.tan(theta / R))
        res = -lap + hv * y
        return np.abs(res) / (np.abs(d2) + np.abs(hv * y) + 1e-300)


def _potential(h, theta):
    if callable(h):
        return np.asarray(h(theta), dtype=float) * np.ones_like(np.asarray(theta, dtype=float))
    return float(h) * np.ones_like(np.asarray(theta, dtype=float))


def _check_coercive(manifold, h):
    if callable(h):
        from .bubbles import ProblemParams
        from .radial_solver import RadialProblem

        prob = RadialProblem(ProblemParams(manifold.n, 0.0), manifold, h, h_min=1e-5, growth=1.05, h_max=2e-2)
        nu = prob.discretize().smallest_eigenvalue()
    else:
        nu = float(h)  # the constants are the bottom of the spectrum of Delta + h
    if not nu > 0:
        raise ValueError(f"Delta_g + h is not coercive (smallest eigenvalue {nu:.3e})")


def solve_green(manifold, h, theta_min=1e-6, rtol=1e-13, seed_gap=1e-4):
    """Radial Green's function of ``Delta_g + h`` with pole at the north pole.

    ``h`` is a constant or a callable of theta.  Raises ``ValueError`` when the
    operator is not coercive and ``RuntimeError`` if the integration fails.
    """
    if manifold.kind != "sphere":
        raise ValueError("Green's functions are implemented for round spheres only")
    _check_coercive(manifold, h)
    n, R = manifold.n, manifold.radius
    L = math.pi * R
    omega = sphere_volume(n)
    h_top = float(_potential(h, np.array([L]))[0])
    c2 = h_top / (2.0 * n)
    t0 = L - seed_gap
    y0 = [1.0 + c2 * seed_gap**2, -2.0 * c2 * seed_gap, 0.0]

    def rhs(t, z):
        y, dy, _ = z
        hv = float(_potential(h, np.array([t]))[0]) if callable(h) else h
        w = omega * (R * math.sin(t / R)) ** (n - 1)
        d2 = -(n - 1) * dy / (R * math.tan(t / R)) + hv * y
        return [dy, d2, -hv * y * w]

    sol = solve_ivp(rhs, (t0, theta_min), y0, method="DOP853", rtol=rtol, atol=1e-18, dense_output=True, first_step=seed_gap * 1e-2)
    if not sol.success:
        raise RuntimeError(f"Green's function integration failed: {sol.message}")
    y_end, _, flux = sol.y[:, -1]
    hv0 = float(_potential(h, np.array([theta_min]))[0])
    # cap [0, theta_min]: y ~ A theta^(2-n), dv ~ omega theta^(n-1) dtheta
    A = y_end * theta_min ** (n - 2)
    tail = hv0 * omega * A * theta_min**2 / 2.0
    total = flux + tail
    if not total > 0:
        raise RuntimeError("flux normalisation failed (non-positive h-weighted integral)")
    g = GreenFunction(manifold, h, theta_min, 1.0 / total, sol.sol, tail)
    g._t_top = t0
    g._c2 = c2
    return g


def closed_form_green_s3(h, theta, radius=1.0):
    """Green's function of Delta + h on the round S^3 of radius R.

    G = sin(k(pi - t)) / (4 pi R sin(k pi) sin t), t = theta/R, k^2 = 1 - h R^2
    (hyperbolic functions when h R^2 > 1).
    """
    t = np.asarray(theta, dtype=float) / radius
    q = 1.0 - h * radius**2
    if q > 0:
        k = math.sqrt(q)
        num = np.sin(k * (math.pi - t)) / math.sin(k * math.pi)
    elif q < 0:
        k = math.sqrt(-q)
        num = np.sinh(k * (math.pi - t)) / math.sinh(k * math.pi)
    else:
        num = (math.pi - t) / math.pi
    return num / (4.0 * math.pi * radius * np.sin(t))


def closed_form_mass_s3(h, radius=1.0):
    """m(h) = -k cot(k pi) / (4 pi R) with k^2 = 1 - h R^2."""
    q = 1.0 - h * radius**2
    if q > 0:
        k = math.sqrt(q)
        return -k / math.tan(k * math.pi) / (4.0 * math.pi * radius)
    if q < 0:
        k = math.sqrt(-q)
        return -k / math.tanh(k * math.pi) / (4.0 * math.pi * radius)
    return -1.0 / (4.0 * math.pi**2 * radius)


def delta_normalization_residual(green, phi, dphi, rtol=1e-11):
    """int (G' phi' + h G phi) dv - phi(0) for a smooth radial test function."""
    n, R = green.n, green.manifold.radius
    omega = sphere_volume(n)

    def f(t):
        w = omega * (R * np.sin(t / R)) ** (n - 1)
        return (green.derivative(t) * dphi(t) + _potential(green.h, t) * green(t) * phi(t)) * w

    rule = RadialQuadrature(rtol=rtol)
    lo, hi = green.theta_min, green.length
    mid = min(1.0, 0.5 * hi)
    v1, _, _ = rule.integrate(lambda r: f(np.exp(r)) * np.exp(r), math.log(lo), math.log(mid))
    v2, _, _ = rule.integrate(f, mid, hi)
    return v1 + v2 - float(phi(0.0))


@dataclass
class MassReport:
    h: float
    mass: float
    error: float
    window: tuple
    beta_theta: np.ndarray
    beta: np.ndarray
    window_masses: dict
    window_consistent: bool
    fit_residual: float

    def as_dict(self):
        return {
            "h": self.h,
            "mass": self.mass,
            "error": self.error,
            "window": list(self.window),
            "window_masses": {k: list(v) for k, v in self.window_masses.items()},
            "window_consistent": self.window_consistent,
            "fit_residual": self.fit_residual,
        }


def _fit_intercept(theta, beta, degree):
    coef = np.polynomial.polynomial.polyfit(theta, beta, degree)
    resid = float(np.max(np.abs(np.polynomial.polynomial.polyval(theta, coef) - beta)))
    return float(coef[0]), resid


def _window_mass(green, window, samples=41):
    theta = np.geomspace(window[0], window[1], samples)
    beta = green(theta) - 1.0 / (4.0 * math.pi * theta)
    m2, r2 = _fit_intercept(theta, beta, 2)
    m3, _ = _fit_intercept(theta, beta, 3)
    # the quadratic fit is the estimate; twice its distance to the cubic fit
    # is the error bar (the difference alone slightly underestimates the bias)
    err = 2.0 * abs(m2 - m3) + 1e-12 * max(1.0, abs(m2))
    return m2, err, theta, beta, r2


def mass(manifold, h, window=(1e-3, 1e-2), check_window=(1e-2, 1e-1), green=None):
    """Mass m_h(x0) = lim_{theta->0} (G(theta) - 1/(4 pi theta)) on a 3-sphere.

    beta is sampled on ``window`` and fitted by a quadratic; the fit on
    ``check_window`` must agree within the combined error bars.  Raises
    ``ArithmeticError`` when the fit residual is not small (unstable
    extrapolation).
    """
    if manifold.n != 3:
        raise ValueError("the mass is defined here for n = 3 only")
    R = manifold.radius
    w1 = (window[0] * R, window[1] * R)
    w2 = (check_window[0] * R, check_window[1] * R)
    g = solve_green(manifold, h, theta_min=min(1e-6 * R, 0.1 * w1[0])) if green is None else green
    m1, e1, theta, beta, r1 = _window_mass(g, w1)
    m2, e2, _, _, _ = _window_mass(g, w2)
    if r1 > 1e-6 * (1.0 + float(np.max(np.abs(beta)))):
        raise ArithmeticError(f"quadratic fit of beta does not settle (residual {r1:.3e})")
    consistent = abs(m1 - m2) <= e1 + e2 + 1e-9
    return MassReport(
        h=float(h) if not callable(h) else math.nan, mass=m1, error=e1, window=w1,
        beta_theta=theta, beta=beta,
        window_masses={f"{w1[0]:g}-{w1[1]:g}": (m1, e1), f"{w2[0]:g}-{w2[1]:g}": (m2, e2)},
        window_consistent=bool(consistent), fit_residual=r1,
    )


def mass_zero_root(manifold, bracket=None, tol=1e-4):
    """Constant potential h* at which the mass vanishes (n = 3).

    ``bracket`` defaults to ``(0.5, 1.0) / R^2``.  Raises
    :class:`NoSignChangeError` if the mass has one sign on the bracket.
    """
    R = manifold.radius
    lo, hi = (0.5 / R**2, 1.0 / R**2) if bracket is None else bracket
    f = lambda h: mass(manifold, h).mass
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise NoSignChangeError(f"mass has the same sign at h={lo} and h={hi}")
    h_star = brentq(f, lo, hi, xtol=1e-12 / R**2, rtol=1e-12)
    m = f(h_star)
    if abs(m) > tol:
        raise ArithmeticError(f"root search ended with mass {m:.3e}")
    return h_star
