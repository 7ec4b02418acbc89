import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hslab.bubbles import Bubble, ProblemParams, best_constant_quadrature
from hslab.geometry import ManifoldModel
from hslab.radial_solver import (
    CoercivityError,
    RadialProblem,
    ThresholdBracketError,
    _bubble_bound_profile,
    _gap_crossing,
    cutoff_bubble_bound,
    energy,
    graded_grid,
    minimize,
    morse_index,
    pointwise_bound_check,
    solve_at_scale,
    solve_for_mu,
    sweep_threshold,
    write_records_csv,
    write_records_json,
)

COARSE = dict(h_min=1e-5, growth=1.02, h_max=2e-2)


def coarse(n, s, a=0.0):
    return RadialProblem(ProblemParams(n, s), a=a, **COARSE)


# -- grid and energy ---------------------------------------------------------------

def test_graded_grid_shape():
    t = graded_grid(math.pi, h_min=1e-6, growth=1.05, h_max=1e-2)
    assert t[0] == 0.0 and t[-1] == pytest.approx(math.pi, abs=1e-14)
    h = np.diff(t)
    assert np.all(h > 0)
    assert h[0] == pytest.approx(1e-6)
    assert h.max() <= 1e-2 * 1.5
    with pytest.raises(ValueError):
        graded_grid(1.0, h_min=1e-2, h_max=1e-3)
    with pytest.raises(ValueError):
        graded_grid(1.0, growth=1.0)


def test_problem_rejects_non_spheres_and_dimension_mismatch():
    with pytest.raises(ValueError):
        RadialProblem(ProblemParams(4, 1.0), ManifoldModel.torus(4))
    with pytest.raises(ValueError):
        RadialProblem(ProblemParams(4, 1.0), ManifoldModel.sphere(5))


@given(logt=st.floats(-3, 3), seed=st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_quotient_is_scale_invariant(logt, seed):
    P = coarse(4, 1.0, 1.0)
    disc = P.discretize()
    u = 1.0 + np.random.default_rng(seed).random(disc.size)
    J1, _ = energy(P, u, disc)
    J2, _ = energy(P, 10.0**logt * u, disc)
    assert J2 == pytest.approx(J1, rel=1e-11)


@given(a=st.floats(0.1, 5.0), da=st.floats(-0.09, 3.0))
@settings(max_examples=25, deadline=None)
def test_quotient_is_affine_in_a(a, da):
    P = coarse(5, 0.5, a)
    disc = P.discretize()
    u = np.cos(0.5 * disc.theta) + 0.1
    J0, F = energy(P, u, disc)
    J1, _ = energy(P.with_a(a + da), u, P.with_a(a + da).discretize())
    assert J1 - J0 == pytest.approx(da * disc.l2_squared(u) / F ** (2.0 / disc.p), rel=1e-9, abs=1e-12)


def test_energy_input_validation():
    P = coarse(4, 1.0, 1.0)
    disc = P.discretize()
    with pytest.raises(ValueError):
        energy(P, np.zeros(disc.size), disc)
    with pytest.raises(ValueError):
        energy(P, np.ones(3), disc)


# -- minimisation ----------------------------------------------------------------

@pytest.mark.parametrize("a", [0.0, -1.0])
def test_non_coercive_potential_raises(a):
    with pytest.raises(CoercivityError):
        minimize(coarse(4, 1.0, a))


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_conformal_case_attains_sobolev_constant(n):
    # s = 0 and a = n(n-2)/4: the quotient is conformally invariant and
    # its infimum on the round sphere equals the Euclidean best constant
    P = coarse(n, 0.0, n * (n - 2) / 4.0)
    r = minimize(P)
    mu0 = best_constant_quadrature(P.params)
    assert r.converged
    assert r.lam == pytest.approx(mu0, rel=1e-9)


def test_minimiser_is_positive_normalised_and_index_one():
    P = coarse(4, 1.0, 1.0)
    r = minimize(P)
    disc = P.discretize()
    assert r.converged and r.residual <= 1e-9
    assert np.all(r.u > 0)
    assert disc.constraint(r.u) == pytest.approx(1.0, rel=1e-10)
    assert energy(P, r.u, disc)[0] == pytest.approx(r.lam, rel=1e-10)
    assert morse_index(P, r) == 1


def test_lambda_increases_with_a_and_stays_below_mu_s():
    lams = [minimize(coarse(4, 1.0, a)).lam for a in (0.25, 0.5, 1.0, 1.5)]
    assert np.all(np.diff(lams) > 0)
    assert max(lams) < best_constant_quadrature(ProblemParams(4, 1.0))


def test_cutoff_bubble_bound_dominates_minimum():
    for a in (0.5, 1.5):
        P = coarse(4, 1.0, a)
        bound, _ = cutoff_bubble_bound(P)
        assert bound >= minimize(P).lam


def test_minimiser_quotient_beats_bubble_start():
    P = coarse(5, 0.5, 1.0)
    r = minimize(P)
    b = Bubble(P.params)
    J, _ = energy(P, b.radial(r.theta * b.K / 0.3))
    assert r.lam <= J


def test_record_round_trip():
    r = minimize(coarse(4, 1.0, 1.0))
    rec = r.record()
    for key in ("a", "lambda", "mu", "argmax_theta", "residual", "converged"):
        assert key in rec
    back = json.loads(write_records_json([rec]))
    assert back[0]["lambda"] == rec["lambda"]
    csv_text = write_records_csv([rec])
    head, row = csv_text.strip().splitlines()
    assert head.startswith("a,lambda,mu")
    assert float(row.split(",")[1]) == rec["lambda"]


# -- scale parametrisation -------------------------------------------------------

def test_scale_constrained_family():
    P = coarse(4, 1.0)
    prev = None
    for mu in (0.2, 0.1, 0.05):
        r = solve_for_mu(P, mu)
        assert r.converged and r.extra["morse_index"] == 1
        assert r.mu == pytest.approx(mu, rel=0.15)
        if prev is not None:
            # smaller blow-up scale needs a larger potential
            assert r.a > prev
        prev = r.a


def test_scale_solve_is_consistent_with_fixed_a_minimum():
    P = coarse(4, 1.0)
    r = solve_at_scale(P, 0.1)
    fixed = minimize(P.with_a(r.a))
    assert fixed.lam == pytest.approx(r.lam, rel=1e-6)
    assert fixed.mu == pytest.approx(r.mu, rel=1e-3)


def test_pointwise_bound_expression_is_one_on_exact_bubble():
    p = ProblemParams(5, 1.0)
    th = np.logspace(-4, 1, 50)
    assert np.allclose(_bubble_bound_profile(p, 0.01, th), 1.0, rtol=1e-12)


def test_pointwise_bound_constants_are_order_one():
    r = minimize(coarse(4, 1.0, 1.5))
    up, lo = pointwise_bound_check(r)
    assert 0 < lo <= up < 10


# -- sweeps -----------------------------------------------------------------------

def test_sweep_grid_validation():
    P = coarse(4, 1.0)
    with pytest.raises(ValueError):
        sweep_threshold(P, [])
    with pytest.raises(ValueError):
        sweep_threshold(P, [1.0, 0.5])


def test_gap_crossing_interpolates_in_log_gap():
    a = [0.0, 1.0, 2.0]
    gaps = [1.0, 1e-2, 1e-4]
    assert _gap_crossing(a, gaps, 1e-1) == pytest.approx(0.5)
    assert _gap_crossing(a, gaps, 1e-3) == pytest.approx(1.5)
    with pytest.raises(ThresholdBracketError):
        _gap_crossing(a, gaps, 1e-6)
    with pytest.raises(ThresholdBracketError):
        _gap_crossing(a, gaps, 10.0)


def test_sweep_below_threshold_raises_bracket_error():
    with pytest.raises(ThresholdBracketError):
        sweep_threshold(coarse(4, 1.0), [0.5, 1.0], refine=False)
