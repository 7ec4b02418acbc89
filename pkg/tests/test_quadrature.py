import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hslab.quadrature import (
    QuadratureError,
    RadialQuadrature,
    ball_radial_nodes,
    integrate_radial,
    sphere_monomial_integral,
    sphere_rule,
    sphere_volume,
)


def test_sphere_volume_low_dims():
    assert sphere_volume(2) == pytest.approx(2 * math.pi)
    assert sphere_volume(3) == pytest.approx(4 * math.pi)
    assert sphere_volume(4) == pytest.approx(2 * math.pi**2)


def test_algebraic_singularity_at_origin():
    # int_0^1 r^-0.5 dr = 2
    v, e = integrate_radial(lambda r: r**-0.5, hi=1.0)
    assert v == pytest.approx(2.0, rel=1e-13)


def test_half_line_algebraic_tail():
    # int_0^inf r^3 / (1 + r^2)^4 dr = 1/12
    v, e = integrate_radial(lambda r: r**3 / (1 + r**2) ** 4)
    assert v == pytest.approx(1 / 12, rel=1e-12)


def test_split_at_scale_matches_unsplit():
    f = lambda r: np.exp(-r / 1e-3) * r
    v, _ = integrate_radial(f, hi=1.0, scale=1e-3)
    assert v == pytest.approx(1e-6, rel=1e-10)


def test_strict_mode_raises():
    rule = RadialQuadrature(rtol=1e-15, max_level=2)
    with pytest.raises(QuadratureError):
        rule.integrate(lambda r: np.sin(50 * r), 0.0, 10.0, strict=True)


def test_ball_nodes_integrate_polynomial():
    x, w = ball_radial_nodes(2.0, 0.1, level=6)
    assert np.sum(w * x**3) == pytest.approx(4.0, rel=1e-12)


@given(n=st.integers(2, 6), exps=st.lists(st.integers(0, 4), min_size=6, max_size=6))
@settings(max_examples=50, deadline=None)
def test_sphere_rule_exact_on_monomials(n, exps):
    e = exps[:n]
    if sum(e) > 8:
        e = [min(k, 1) for k in e]
    pts, w = sphere_rule(n, degree=8)
    val = np.sum(w * np.prod(pts ** np.array(e), axis=1))
    assert val == pytest.approx(sphere_monomial_integral(e), abs=1e-12)


def test_sphere_rule_weights_sum_to_volume():
    for n in (2, 3, 4, 5):
        pts, w = sphere_rule(n)
        assert np.sum(w) == pytest.approx(sphere_volume(n), rel=1e-14)
        assert np.allclose(np.linalg.norm(pts, axis=1), 1.0)
