"""Model metrics in normal coordinates at x0 and the curvature data extracted from them.

Conventions: ``R_abcd`` is normalised so that sum_{i,j} R_ijij = Scal(x0) and
Cartan's expansion reads g_ij = delta_ij + (1/3) R_ipqj X^p X^q + O(|X|^3).
For a round sphere of radius ``R`` this gives
R_abcd = (delta_ac delta_bd - delta_ad delta_bc) / R^2.
"""

from __future__ import annotations

import importlib
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .quadrature import sphere_monomial_integral, sphere_rule, sphere_volume

__all__ = [
    "ManifoldModel",
    "CurvatureSummary",
    "load_model",
    "sphere_moment2",
    "sphere_moment4",
    "sphere_moment_quadrature",
    "sphere_moment_monte_carlo",
    "sphere_moment_exact",
    "cartan_order",
    "model_from_dict",
    "christoffel",
    "christoffel_from_metric_derivatives",
    "curvature_identities",
    "cartan_residual",
    "metric_hessian_at_origin",
]

KINDS = ("sphere", "torus", "custom")


# -- round sphere in normal coordinates --------------------------------------
#
# g_ij = delta_ij + phi(r) (r^2 delta_ij - X_i X_j),   phi = (f - 1) / r^2,
# f = (R sin(r/R) / r)^2.  psi = phi'(r) / r.  Both are even and smooth in r.

def _sphere_phi_psi(r, R):
    r = np.asarray(r, dtype=float)
    x = r / R
    small = x < 1e-2
    xs = np.where(small, x, 0.0)
    phi_ser = (-1.0 / 3 + 2 * xs**2 / 45 - xs**4 / 315 + 2 * xs**6 / 14175) / R**2
    psi_ser = (4.0 / 45 - 4 * xs**2 / 315 + 12 * xs**4 / 14175) / R**4
    xl = np.where(small, 1.0, x)
    rl = xl * R
    sinc = np.sin(xl) / xl
    f = sinc**2
    fp = 2.0 * sinc * (xl * np.cos(xl) - np.sin(xl)) / xl**2 / R
    phi_dir = (f - 1.0) / rl**2
    dphi = fp / rl**2 - 2.0 * (f - 1.0) / rl**3
    psi_dir = dphi / rl
    return np.where(small, phi_ser, phi_dir), np.where(small, psi_ser, psi_dir)


def _sphere_metric(X, R):
    X = np.asarray(X, dtype=float)
    n = X.shape[-1]
    r2 = np.sum(X * X, axis=-1)
    phi, _ = _sphere_phi_psi(np.sqrt(r2), R)
    eye = np.eye(n)
    return eye + phi[..., None, None] * (r2[..., None, None] * eye - X[..., :, None] * X[..., None, :])


def _sphere_metric_d1(X, R):
    """d_k g_ij as an array [..., k, i, j]."""
    X = np.asarray(X, dtype=float)
    n = X.shape[-1]
    r2 = np.sum(X * X, axis=-1)
    phi, psi = _sphere_phi_psi(np.sqrt(r2), R)
    eye = np.eye(n)
    A = r2[..., None, None] * eye - X[..., :, None] * X[..., None, :]
    term1 = psi[..., None, None, None] * X[..., :, None, None] * A[..., None, :, :]
    term2 = (
        2.0 * X[..., :, None, None] * eye[None, :, :]
        - eye[:, :, None] * X[..., None, None, :]
        - eye[:, None, :] * X[..., None, :, None]
    )
    return term1 + phi[..., None, None, None] * term2


def christoffel_from_metric_derivatives(g, dg):
    """Gamma^k_ij = 1/2 g^{kp} (d_i g_jp + d_j g_ip - d_p g_ij); ``dg[..., k, i, j] = d_k g_ij``."""
    ginv = np.linalg.inv(g)
    # lower[..., i, j, p] = d_i g_jp + d_j g_ip - d_p g_ij
    lower = (
        np.einsum("...ijp->...ijp", dg)
        + np.einsum("...jip->...ijp", dg)
        - np.einsum("...pij->...ijp", dg)
    )
    return 0.5 * np.einsum("...kp,...ijp->...kij", ginv, lower)


@dataclass(frozen=True)
class ManifoldModel:
    """Metric near x0 written in normal coordinates on the ball B_delta(0).

    ``kind`` is ``"sphere"`` (round sphere of radius ``radius``, x0 at a pole),
    ``"torus"`` (flat) or ``"custom"`` (``metric_fn`` maps points ``[..., n]``
    to matrices ``[..., n, n]``; it must already be in normal coordinates).
    """

    n: int
    kind: str = "sphere"
    radius: float = 1.0
    delta: float = 0.5
    metric_fn: Callable | None = None
    scal: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if self.n < 2:
            raise ValueError("dimension must be >= 2")
        if self.kind == "custom" and self.metric_fn is None:
            raise ValueError("custom models need a metric function")
        if self.kind == "sphere" and not (0 < self.delta < math.pi * self.radius):
            raise ValueError("chart radius must be below the injectivity radius pi*R")
        if not self.delta > 0:
            raise ValueError("chart radius must be positive")

    @classmethod
    def sphere(cls, n, radius=1.0, delta=None):
        return cls(n=n, kind="sphere", radius=radius, delta=0.5 * radius if delta is None else delta)

    @classmethod
    def torus(cls, n, delta=0.5):
        return cls(n=n, kind="torus", radius=1.0, delta=delta)

    @classmethod
    def custom(cls, n, metric_fn, delta=0.5, scal=None):
        return cls(n=n, kind="custom", metric_fn=metric_fn, delta=delta, scal=scal)

    # -- metric ----------------------------------------------------------------
    def metric(self, X):
        X = np.asarray(X, dtype=float)
        if self.kind == "sphere":
            return _sphere_metric(X, self.radius)
        if self.kind == "torus":
            return np.broadcast_to(np.eye(self.n), X.shape[:-1] + (self.n, self.n)).copy()
        return np.asarray(self.metric_fn(X), dtype=float)

    def metric_inverse(self, X):
        return np.linalg.inv(self.metric(X))

    def metric_d1(self, X, h=None):
        """First derivatives d_k g_ij, closed form for sphere/torus, finite differences otherwise."""
        X = np.asarray(X, dtype=float)
        if self.kind == "sphere":
            return _sphere_metric_d1(X, self.radius)
        if self.kind == "torus":
            return np.zeros(X.shape[:-1] + (self.n,) * 3)
        return _fd_metric_d1(self.metric, X, self.delta * 1e-3 if h is None else h)

    def christoffel_exact(self, X):
        """Christoffel symbols from closed-form metric derivatives (sphere/torus only)."""
        if self.kind == "custom":
            raise ValueError("no closed form for custom metrics")
        X = np.asarray(X, dtype=float)
        return christoffel_from_metric_derivatives(self.metric(X), self.metric_d1(X))

    def christoffel(self, X, h=None):
        """Christoffel symbols Gamma[..., k, i, j], exact where available."""
        X = np.asarray(X, dtype=float)
        return christoffel_from_metric_derivatives(self.metric(X), self.metric_d1(X, h))

    # -- curvature at x0 -------------------------------------------------------
    @property
    def scal_x0(self):
        if self.kind == "sphere":
            return self.n * (self.n - 1) / self.radius**2
        if self.kind == "torus":
            return 0.0
        if self.scal is not None:
            return self.scal
        R = self.riemann_x0()
        return float(np.einsum("ijij->", R))

    def riemann_x0(self, h=None):
        """Curvature tensor R_abcd at x0 in the convention of this module."""
        n = self.n
        if self.kind == "sphere":
            eye = np.eye(n)
            return (np.einsum("ac,bd->abcd", eye, eye) - np.einsum("ad,bc->abcd", eye, eye)) / self.radius**2
        if self.kind == "torus":
            return np.zeros((n,) * 4)
        H, _ = metric_hessian_at_origin(self, h)
        # H[p, q, i, j] = d_p d_q g_ij(0)
        return 0.5 * (
            np.einsum("adbc->abcd", H) + np.einsum("bcad->abcd", H)
            - np.einsum("acbd->abcd", H) - np.einsum("bdac->abcd", H)
        )

    def to_dict(self):
        d = {"kind": self.kind, "n": self.n, "radius": self.radius, "delta": self.delta}
        if self.kind == "custom":
            d["metric"] = getattr(self.metric_fn, "_hslab_path", repr(self.metric_fn))
        return d


def load_model(spec):
    """Build a model from a JSON file path, a dict, or ``sphere:R`` / ``torus`` shorthand.

    Dict/JSON schema: ``{"kind": "sphere"|"torus"|"custom", "n": int,
    "radius": real, "delta": real}``; custom models add ``"metric":
    "module:function"``.  ``n`` may be omitted for the shorthand forms and
    is then supplied by the caller through ``spec["n"]``.
    """
    if isinstance(spec, str):
        if spec.startswith("sphere"):
            radius = float(spec.split(":", 1)[1]) if ":" in spec else 1.0
            return {"kind": "sphere", "radius": radius}
        if spec == "torus":
            return {"kind": "torus"}
        with open(spec) as fh:
            spec = json.load(fh)
    return dict(spec)


def model_from_dict(d, n=None):
    d = dict(d)
    if "kind" not in d:
        raise ValueError("manifold spec: missing 'kind'")
    kind = d["kind"]
    n = int(d.get("n", n if n is not None else 0))
    if n < 2:
        raise ValueError("manifold spec: missing or invalid 'n'")
    radius = float(d.get("radius", 1.0))
    if kind == "sphere":
        return ManifoldModel.sphere(n, radius, d.get("delta"))
    if kind == "torus":
        return ManifoldModel.torus(n, float(d.get("delta", 0.5)))
    if kind == "custom":
        path = d.get("metric")
        if not path or ":" not in path:
            raise ValueError("manifold spec: custom models need 'metric': 'module:function'")
        mod, fn = path.split(":", 1)
        func = getattr(importlib.import_module(mod), fn)
        return ManifoldModel.custom(n, func, float(d.get("delta", 0.5)), d.get("scal"))
    raise ValueError(f"manifold spec: unknown kind {kind!r}")


# -- sphere moments ------------------------------------------------------------

def sphere_moment2(n, m, k):
    """int_{S^(n-1)} sigma^m sigma^k = delta^mk omega_{n-1} / n (1-based indices)."""
    _check_indices(n, m, k)
    return sphere_volume(n) / n if m == k else 0.0


def sphere_moment4(n, i, j, b1, b2):
    """int_{S^(n-1)} sigma^i sigma^j sigma^b1 sigma^b2 (1-based indices)."""
    _check_indices(n, i, j, b1, b2)
    d = lambda a, b: 1.0 if a == b else 0.0
    pairing = d(i, j) * d(b1, b2) + d(i, b1) * d(j, b2) + d(i, b2) * d(j, b1)
    return sphere_volume(n) * pairing / (n * (n + 2))


def _check_indices(n, *idx):
    for a in idx:
        if not (1 <= a <= n):
            raise ValueError(f"index {a} outside 1..{n}")


def _exponents(n, idx):
    e = [0] * n
    for a in idx:
        e[a - 1] += 1
    return e


def sphere_moment_quadrature(n, *idx, degree=8):
    """Angular-product-rule value of the monomial moment (verification path)."""
    _check_indices(n, *idx)
    pts, w = sphere_rule(n, degree)
    vals = np.ones(len(w))
    for a in idx:
        vals = vals * pts[:, a - 1]
    return float(np.sum(w * vals))


def sphere_moment_monte_carlo(n, *idx, samples=200_000, seed=0):
    """Monte-Carlo estimate and standard error of the monomial moment."""
    _check_indices(n, *idx)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((samples, n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    vals = np.ones(samples)
    for a in idx:
        vals = vals * z[:, a - 1]
    vol = sphere_volume(n)
    return float(vol * vals.mean()), float(vol * vals.std(ddof=1) / math.sqrt(samples))


def sphere_moment_exact(n, *idx):
    """Closed-form moment of any monomial (Gamma-function formula)."""
    return sphere_monomial_integral(_exponents(n, idx))


# -- finite differences ----------------------------------------------------------

def _fd_metric_d1(metric, X, h):
    # 4th-order central differences, output [..., k, i, j]
    X = np.asarray(X, dtype=float)
    n = X.shape[-1]
    out = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        d = (-metric(X + 2 * e) + 8 * metric(X + e) - 8 * metric(X - e) + metric(X - 2 * e)) / (12 * h)
        out.append(d)
    return np.stack(out, axis=-3)


def christoffel(model, X, h=None):
    """Christoffel symbols Gamma[..., k, i, j] from central finite differences of the metric.

    ``h`` defaults to ``1e-3 * delta``; steps that push the stencil outside
    the chart raise ``ValueError``.
    """
    X = np.asarray(X, dtype=float)
    h = model.delta * 1e-3 if h is None else h
    if h <= 0:
        raise ValueError("step must be positive")
    if np.max(np.linalg.norm(X, axis=-1)) + 2 * h >= model.delta:
        raise ValueError("finite-difference stencil leaves the chart B_delta(0)")
    dg = _fd_metric_d1(model.metric, X, h)
    return christoffel_from_metric_derivatives(model.metric(X), dg)


def _second_derivatives_at(f, n, h, x0=None):
    """4th-order FD Hessian of a tensor-valued f at x0: out[p, q, ...]."""
    x0 = np.zeros(n) if x0 is None else x0
    f0 = f(x0)
    H = np.zeros((n, n) + np.shape(f0))
    E = np.eye(n) * h
    for p in range(n):
        e = E[p]
        H[p, p] = (-f(x0 + 2 * e) + 16 * f(x0 + e) - 30 * f0 + 16 * f(x0 - e) - f(x0 - 2 * e)) / (12 * h * h)
        for q in range(p + 1, n):
            g = E[q]

            def mixed(t):
                return (f(x0 + t * (e + g)) - f(x0 + t * (e - g)) - f(x0 - t * (e - g)) + f(x0 - t * (e + g))) / (4 * t * t * h * h)

            # Richardson on the 2nd-order mixed stencil
            H[p, q] = (4 * mixed(1.0) - mixed(2.0)) / 3.0
            H[q, p] = H[p, q]
    return H


def metric_hessian_at_origin(model, h=None):
    """d_p d_q g_ij(0) with Richardson extrapolation over step halving.

    Returns ``(H, error_estimate)`` where ``H[p, q, i, j]``.
    """
    h = model.delta * 1e-2 if h is None else h
    f = lambda x: model.metric(x)
    H1 = _second_derivatives_at(f, model.n, h)
    H2 = _second_derivatives_at(f, model.n, h / 2)
    H = (16 * H2 - H1) / 15.0
    return H, float(np.max(np.abs(H - H2)))


@dataclass(frozen=True)
class CurvatureSummary:
    """The three curvature sums at x0 and their finite-difference error estimates."""

    sum_dij_gij: float
    sum_dbb_gii: float
    sum_dk_gamma: float
    errors: tuple
    scal: float

    @property
    def targets(self):
        S = self.scal
        return (S / 3.0, -2.0 * S / 3.0, 2.0 * S / 3.0)

    def as_dict(self):
        return {
            "sum_dij_gij": self.sum_dij_gij,
            "sum_dbb_gii": self.sum_dbb_gii,
            "sum_dk_gamma": self.sum_dk_gamma,
            "errors": list(self.errors),
            "scal": self.scal,
            "targets": list(self.targets),
        }


def curvature_identities(model, h=None, tol=1e-4):
    """Finite-difference values of sum d_ij g_ij(0), sum d_bb g_ii(0), sum d_k Gamma^k_ii(0).

    Metric second derivatives use 5-point stencils with Richardson
    extrapolation; the Christoffel derivative differentiates finite-difference
    Christoffel symbols.  Raises ``ArithmeticError`` when the Richardson
    error estimate exceeds ``tol``.
    """
    n = model.n
    h = model.delta * 1e-2 if h is None else h
    H, err_h = metric_hessian_at_origin(model, h)
    s1 = float(np.einsum("ijij->", H))
    s2 = float(np.einsum("bbii->", H))

    def dk_gamma(step):
        inner = step * 1e-2
        total = 0.0
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            G = lambda x: christoffel(model, x, inner)
            d = (-G(2 * e) + 8 * G(e) - 8 * G(-e) + G(-2 * e)) / (12 * step)
            total += float(np.trace(d[k]))
        return total

    g1 = dk_gamma(h)
    g2 = dk_gamma(h / 2)
    s3 = (16 * g2 - g1) / 15.0
    err_g = abs(s3 - g2)
    errs = (err_h * n * n, err_h * n * n, err_g)
    if max(errs) > tol * max(1.0, abs(model.scal_x0)):
        raise ArithmeticError(f"Richardson extrapolation did not settle (errors {errs})")
    return CurvatureSummary(s1, s2, s3, errs, model.scal_x0)


def cartan_residual(model, X):
    """max_ij |g_ij(X) - delta_ij - (1/3) R_ipqj(x0) X^p X^q|."""
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != model.n:
        raise ValueError("point has the wrong dimension")
    if np.max(np.linalg.norm(X, axis=-1)) >= model.delta:
        raise ValueError("point outside the chart")
    R = model.riemann_x0()
    quad = np.einsum("ipqj,...p,...q->...ij", R, X, X) / 3.0
    res = model.metric(X) - np.eye(model.n) - quad
    return np.max(np.abs(res), axis=(-2, -1))


def cartan_order(model, t=1e-2, direction=None):
    """Ratio residual(2t)/residual(t) along ``direction`` (observed order = log2 ratio)."""
    n = model.n
    d = np.ones(n) / math.sqrt(n) if direction is None else np.asarray(direction, float) / np.linalg.norm(direction)
    r1 = float(cartan_residual(model, t * d))
    r2 = float(cartan_residual(model, 2 * t * d))
    if r1 == 0.0:
        return math.nan, r1, r2
    return r2 / r1, r1, r2
