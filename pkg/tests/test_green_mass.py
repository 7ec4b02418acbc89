import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hslab.geometry import ManifoldModel
from hslab.green_mass import (
    NoSignChangeError,
    closed_form_green_s3,
    closed_form_mass_s3,
    delta_normalization_residual,
    mass,
    mass_zero_root,
    solve_green,
)
from hslab.quadrature import integrate_radial


@given(h=st.floats(0.05, 4.0), radius=st.sampled_from([0.5, 1.0, 2.0]))
@settings(max_examples=15, deadline=None)
def test_green_matches_closed_form_on_s3(h, radius):
    M = ManifoldModel.sphere(3, radius)
    hh = h / radius**2
    g = solve_green(M, hh)
    th = radius * np.linspace(1e-3, math.pi - 1e-3, 60)
    assert np.allclose(g(th), closed_form_green_s3(hh, th, radius), rtol=1e-8)


def test_closed_form_mass_branches_are_continuous():
    # k^2 = 1 - h changes sign at h = 1
    lo, mid, hi = closed_form_mass_s3(1.0 - 1e-8), closed_form_mass_s3(1.0), closed_form_mass_s3(1.0 + 1e-8)
    assert lo == pytest.approx(mid, rel=1e-6) and hi == pytest.approx(mid, rel=1e-6)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_green_positive_decreasing_and_parametrix(n):
    g = solve_green(ManifoldModel.sphere(n), 1.5)
    th = np.geomspace(1e-5, math.pi - 1e-3, 200)
    G = g(th)
    assert np.all(G > 0)
    assert np.all(np.diff(G) < 0)
    assert g.parametrix_ratio(1e-5) == pytest.approx(1.0, abs=1e-4)
    assert np.max(g.ode_residual(np.linspace(0.1, 3.0, 20))) < 1e-6


@pytest.mark.parametrize(
    "phi,dphi",
    [
        (np.cos, lambda t: -np.sin(t)),
        (lambda t: np.exp(np.cos(t)), lambda t: -np.sin(t) * np.exp(np.cos(t))),
        (lambda t: np.cos(2 * t) + 2.0, lambda t: -2 * np.sin(2 * t)),
    ],
)
@pytest.mark.parametrize("n", [3, 4])
def test_delta_normalisation_against_test_functions(phi, dphi, n):
    g = solve_green(ManifoldModel.sphere(n), 0.8)
    assert abs(delta_normalization_residual(g, phi, dphi)) < 1e-6


def test_green_evaluation_domain():
    g = solve_green(ManifoldModel.sphere(3), 1.0, theta_min=1e-5)
    with pytest.raises(ValueError):
        g(1e-7)
    with pytest.raises(ValueError):
        g(4.0)
    # values inside the seeding gap at the antipode come from the regular series
    assert g(math.pi) == pytest.approx(closed_form_green_s3(1.0, math.pi - 1e-9), rel=1e-6)


@pytest.mark.parametrize("h", [0.0, -0.5])
def test_non_coercive_potential_rejected(h):
    with pytest.raises(ValueError):
        solve_green(ManifoldModel.sphere(3), h)


def test_non_sphere_rejected():
    with pytest.raises(ValueError):
        solve_green(ManifoldModel.torus(3), 1.0)


def test_callable_potential_matches_constant():
    M = ManifoldModel.sphere(3)
    g1 = solve_green(M, 1.3)
    g2 = solve_green(M, lambda t: 1.3 + 0.0 * t)
    th = np.linspace(0.01, 3.0, 20)
    assert np.allclose(g1(th), g2(th), rtol=1e-9)


# -- mass ---------------------------------------------------------------------------

@pytest.mark.parametrize("h,radius", [(0.3, 1.0), (0.75, 1.0), (2.0, 1.0), (0.1, 2.0)])
def test_mass_matches_closed_form(h, radius):
    rep = mass(ManifoldModel.sphere(3, radius), h)
    exact = closed_form_mass_s3(h, radius)
    assert abs(rep.mass - exact) <= max(rep.error, 1e-9)
    assert abs(rep.mass - exact) < 1e-6
    assert rep.window_consistent


def test_mass_decreases_with_h_at_rate_of_green_l2_norm():
    # d m / d h = - int G^2 dv
    M = ManifoldModel.sphere(3)
    h, dh = 1.2, 1e-4
    slope = (mass(M, h + dh).mass - mass(M, h - dh).mass) / (2 * dh)
    g = solve_green(M, h, theta_min=1e-8)
    l2, _ = integrate_radial(lambda t: g(np.clip(t, 1e-8, math.pi)) ** 2 * 4 * math.pi * np.sin(t) ** 2, hi=math.pi, scale=1.0)
    assert slope == pytest.approx(-l2, rel=1e-5)
    hs = [0.3, 0.6, 0.9, 1.5]
    ms = [mass(M, x).mass for x in hs]
    assert np.all(np.diff(ms) < 0)


def test_mass_root_on_unit_s3():
    # m(h) = -k cot(k pi)/(4 pi) with k^2 = 1 - h vanishes at k = 1/2
    assert mass_zero_root(ManifoldModel.sphere(3)) == pytest.approx(0.75, abs=1e-8)
    assert mass_zero_root(ManifoldModel.sphere(3, 2.0)) == pytest.approx(0.75 / 4, abs=1e-8)


def test_mass_root_without_sign_change():
    with pytest.raises(NoSignChangeError):
        mass_zero_root(ManifoldModel.sphere(3), bracket=(1.0, 2.0))


def test_mass_only_in_dimension_three():
    with pytest.raises(ValueError):
        mass(ManifoldModel.sphere(4), 1.0)


def test_mass_report_serialises():
    d = mass(ManifoldModel.sphere(3), 1.0).as_dict()
    assert set(d) >= {"h", "mass", "error", "window", "window_masses", "window_consistent"}
