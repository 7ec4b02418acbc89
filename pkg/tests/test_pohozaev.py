import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hslab.bubbles import Bubble, ProblemParams
from hslab.geometry import ManifoldModel
from hslab.pohozaev import (
    PohozaevInput,
    RadialProfile,
    UnresolvedError,
    calpha_asymptotic,
    calpha_target,
    extrapolate,
    log_moment_lemma,
    n3_bound_check,
    pohozaev_terms,
)
from hslab.radial_solver import RadialProblem, minimize


def power_profile(c0, k):
    """u = c0 (1 + r^2)^-k and its radial derivatives."""
    f = lambda r: c0 * (1 + r**2) ** -k
    df = lambda r: -2 * k * c0 * r * (1 + r**2) ** (-k - 1)
    d2f = lambda r: -2 * k * c0 * (1 + r**2) ** (-k - 2) * (1 + r**2 - 2 * (k + 1) * r**2)
    return RadialProfile.from_function(f, df, d2f)


@given(
    n=st.integers(3, 6),
    s=st.sampled_from([0.0, 0.5, 1.0, 1.5]),
    c0=st.floats(0.2, 3.0),
    k=st.floats(0.3, 3.0),
    lam=st.floats(0.0, 20.0),
    delta=st.floats(0.2, 2.0),
)
@settings(max_examples=30, deadline=None)
def test_flat_calculus_identity_for_arbitrary_profiles(n, s, c0, k, lam, delta):
    p = ProblemParams(n, s)
    inp = PohozaevInput(p, ManifoldModel.torus(n, delta=2.0), power_profile(c0, k), 0.0, lam, delta)
    rep = pohozaev_terms(inp)
    scale = max(abs(rep.B), abs(rep.volume_flat), 1e-12)
    assert rep.flat_residual <= 1e-8 * scale + 1e-12
    # flat metric: every curvature term vanishes
    assert rep.D == 0.0


@pytest.mark.parametrize("n,s", [(3, 0.0), (4, 1.0), (5, 0.5), (6, 1.5)])
def test_exact_bubble_balances_on_flat_space(n, s):
    p = ProblemParams(n, s)
    b = Bubble.rescaled(p, 0.1)
    inp = PohozaevInput(p, ManifoldModel.torus(n, delta=1.0), RadialProfile.from_bubble(b), 0.0, b.mu_s, 0.7)
    rep = pohozaev_terms(inp)
    assert rep.C == 0.0
    assert abs(rep.B) <= 1e-9 * max(1.0, abs(rep.volume_flat))
    assert rep.identity_residual <= 1e-9


def _sphere_report(a=1.5, symmetric=None):
    P = RadialProblem(ProblemParams(4, 1.0), a=a)
    r = minimize(P)
    inp = PohozaevInput(r.params, ManifoldModel.sphere(4), RadialProfile.from_solve(r), a, r.lam, 0.5, r.mu)
    return inp, pohozaev_terms(inp, symmetric=symmetric)


def test_assembly_identity_on_sphere_solution():
    _, rep = _sphere_report()
    size = max(abs(rep.B), abs(rep.C), abs(rep.D1), abs(rep.D2), abs(rep.D3), abs(rep.D4))
    assert rep.identity_residual <= 1e-4 * size
    assert rep.D == pytest.approx(rep.D1 - rep.D2 + (rep.D3 - rep.D4), rel=1e-14)


def test_symmetric_shortcut_matches_full_angular_rule():
    inp, rep = _sphere_report()
    full = pohozaev_terms(inp, symmetric=False)
    for k in ("D1", "D2", "D3", "D4"):
        assert getattr(full, k) == pytest.approx(getattr(rep, k), rel=1e-12)


@given(a1=st.floats(-5, 5), a2=st.floats(-5, 5))
@settings(max_examples=20, deadline=None)
def test_C_is_linear_in_potential(a1, a2):
    p = ProblemParams(5, 0.5)
    prof = RadialProfile.from_bubble(Bubble.rescaled(p, 0.2))
    M = ManifoldModel.torus(5, delta=1.0)
    C = lambda a: pohozaev_terms(PohozaevInput(p, M, prof, a, 0.0, 0.8)).C
    assert C(a1 + a2) == pytest.approx(C(a1) + C(a2), rel=1e-10, abs=1e-14)
    # callable potentials are accepted and agree with constants
    assert pohozaev_terms(PohozaevInput(p, M, prof, lambda r: a1 + 0 * r, 0.0, 0.8)).C == pytest.approx(C(a1), rel=1e-12, abs=1e-14)


def test_budget_raises_when_unresolved():
    p = ProblemParams(4, 1.0)
    inp = PohozaevInput(p, ManifoldModel.sphere(4), RadialProfile.from_bubble(Bubble.rescaled(p, 1e-3)), 1.0, 1.0, 0.5)
    with pytest.raises(UnresolvedError):
        pohozaev_terms(inp, level=3, budget=1e-300)


def test_input_validation():
    p = ProblemParams(4, 1.0)
    prof = RadialProfile.from_bubble(Bubble(p))
    with pytest.raises(ValueError):
        PohozaevInput(p, ManifoldModel.sphere(5), prof)
    with pytest.raises(ValueError):
        PohozaevInput(p, ManifoldModel.sphere(4), prof, delta=1.0)
    with pytest.raises(ValueError):
        PohozaevInput(p, ManifoldModel.sphere(4), prof, delta=0.0)


# -- ladder fits -----------------------------------------------------------------

@given(c=st.lists(st.floats(-10, 10), min_size=3, max_size=3))
@settings(max_examples=30, deadline=None)
def test_extrapolation_exact_on_quadratics(c):
    x = np.array([0.1, 0.05, 0.025, 0.0125])
    y = c[0] + c[1] * x + c[2] * x**2
    val, _ = extrapolate(x, y, degree=2)
    assert val == pytest.approx(c[0], abs=1e-9)


def test_extrapolation_needs_three_points():
    with pytest.raises(ValueError):
        extrapolate([0.1, 0.2], [1.0, 2.0])


def test_calpha_limit_n5():
    p = ProblemParams(5, 1.0)
    got, err, mu, vals = calpha_asymptotic(p, 2.0, np.geomspace(1e-2, 1e-4, 5), return_samples=True)
    assert got == pytest.approx(calpha_target(p, 2.0), rel=1e-3)
    # int W(u) u = -int u^2 + boundary terms, so C = a int u^2 > 0 for a > 0
    assert np.all(vals > 0)


def test_calpha_ladder_validation():
    with pytest.raises(ValueError):
        calpha_asymptotic(ProblemParams(3, 0.0), 1.0, [1e-2, 1e-3, 1e-4])
    with pytest.raises(ValueError):
        calpha_asymptotic(ProblemParams(5, 0.0), 1.0, [1e-2, 1e-3])


def test_log_moment_only_in_dimension_four():
    with pytest.raises(ValueError):
        log_moment_lemma(ProblemParams(5, 1.0), (1, 1, 1, 1), [1e-2, 1e-3, 1e-4])


def test_log_moment_odd_pattern_vanishes():
    v = log_moment_lemma(ProblemParams(4, 1.0), (1, 2, 3, 3), np.geomspace(1e-2, 1e-6, 5))
    assert v == pytest.approx(0.0, abs=1e-12)


def test_n3_bound_ratio_is_bounded():
    p = ProblemParams(3, 0.5)
    worst, ratios = n3_bound_check(p, 1.0, [1e-2, 1e-3, 1e-4])
    assert math.isfinite(worst) and worst == max(ratios)
    # the ratio must not grow as mu shrinks
    assert ratios[-1] <= 2 * ratios[0]
    with pytest.raises(ValueError):
        n3_bound_check(ProblemParams(4, 0.5), 1.0, [1e-2])
