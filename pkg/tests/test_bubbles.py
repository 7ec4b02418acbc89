import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hslab.bubbles import (
    Bubble,
    IntegrabilityError,
    ProblemParams,
    best_constant_quadrature,
    bubble_eval,
    cns,
    cns_fraction,
    critical_exponent,
    gamma_integral_identity,
    l2_norm_squared,
    normalization_check,
    normalization_scale,
    pde_residual,
    rayleigh_quotient,
    rayleigh_ratio_exact,
    rayleigh_ratio_identity,
)

dims = st.integers(min_value=3, max_value=7)
exps = st.sampled_from([0.0, 0.25, 0.5, 1.0, 1.5, 1.9])


def test_params_validation():
    with pytest.raises(ValueError):
        ProblemParams(2, 0.0)
    with pytest.raises(ValueError):
        ProblemParams(4, 2.0)
    with pytest.raises(ValueError):
        ProblemParams(4, -0.1)


def test_critical_exponent_values():
    assert critical_exponent(ProblemParams(4, 0.0)) == 4.0
    assert critical_exponent(ProblemParams(3, 0.0)) == 6.0
    assert critical_exponent(ProblemParams(4, 1.0)) == 3.0


def test_s_zero_limits_to_sobolev():
    # s = 0 is the plain Sobolev case: exponent 2n/(n-2), c_{n,0} = (n-2)/(4(n-1))
    for n in (3, 4, 5, 6):
        p = ProblemParams(n, 0.0)
        assert critical_exponent(p) == pytest.approx(2 * n / (n - 2), abs=1e-15)
        assert cns_fraction(n, 0) == Fraction(n - 2, 4 * (n - 1))


@pytest.mark.parametrize("s", [0, Fraction(1, 2), 1, Fraction(3, 2)])
def test_cns_n4_is_one_sixth(s):
    assert cns_fraction(4, s) == Fraction(1, 6)
    assert cns(ProblemParams(4, float(s))) == pytest.approx(1 / 6, abs=1e-15)


def test_cns_spot_values():
    assert cns_fraction(3, 0) == Fraction(1, 8)
    assert cns_fraction(5, 1) == Fraction(5, 28)


def test_best_constant_matches_lieb_formula_s0():
    # Sobolev case: mu_0 = n(n-2)/4 * omega_n^(2/n) (omega_n = volume of S^n)
    for n in (3, 4, 5):
        omega_n = 2 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2)
        assert best_constant_quadrature(ProblemParams(n, 0.0)) == pytest.approx(n * (n - 2) / 4 * omega_n ** (2 / n), rel=1e-11)


def test_best_constant_hardy_sobolev_closed_form():
    # Lieb's value for 0 < s < 2:
    # mu_s = (n-2)(n-s) (omega_{n-1}/(2-s) * Gamma^2((n-s)/(2-s)) / Gamma(2(n-s)/(2-s)))^((2-s)/(n-s))
    for n, s in ((4, 1.0), (5, 0.5), (5, 1.0), (6, 1.5)):
        w = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
        q = (n - s) / (2 - s)
        val = (n - 2) * (n - s) * (w / (2 - s) * math.gamma(q) ** 2 / math.gamma(2 * q)) ** ((2 - s) / (n - s))
        assert best_constant_quadrature(ProblemParams(n, s)) == pytest.approx(val, rel=1e-11)


@given(n=dims, s=exps, logc=st.floats(-3, 3))
@settings(max_examples=30, deadline=None)
def test_rayleigh_quotient_scale_invariant(n, s, logc):
    p = ProblemParams(n, s)
    q, _ = rayleigh_quotient(p, 10.0**logc)
    assert q == pytest.approx(best_constant_quadrature(p), rel=1e-10)


@given(n=dims, s=exps)
@settings(max_examples=25, deadline=None)
def test_normalization_and_closure(n, s):
    p = ProblemParams(n, s)
    b = Bubble(p)
    v, err = normalization_check(b)
    assert v == pytest.approx(1.0, abs=1e-8)
    assert normalization_scale(p) ** (2 - s) * b.mu_s == pytest.approx((n - 2) * (n - s), rel=1e-8)


@given(n=dims, s=exps, logmu=st.floats(-4, 2), shift=st.floats(-5, 5))
@settings(max_examples=25, deadline=None)
def test_rescaled_family_keeps_normalisation(n, s, logmu, shift):
    p = ProblemParams(n, s)
    b = Bubble.rescaled(p, 10.0**logmu)
    b = Bubble(p, b.c0, tuple([shift] + [0.0] * (n - 1)))
    v, _ = normalization_check(b)
    assert v == pytest.approx(1.0, abs=1e-8)
    assert bubble_eval(b, np.array(b.X0)) == pytest.approx(10.0 ** (-logmu * (n - 2) / 2), rel=1e-12)


@given(n=dims, s=exps)
@settings(max_examples=20, deadline=None)
def test_gamma_identity_and_dn(n, s):
    p = ProblemParams(n, s)
    lhs, rhs = gamma_integral_identity(p)
    assert lhs == pytest.approx(rhs, rel=1e-8)
    b = Bubble(p)
    assert b.d_n == pytest.approx((n - 2) * b.omega_nm1 * b.K ** (n - 2), rel=1e-8)


@given(n=dims, s=exps, logr=st.floats(-3, 3))
@settings(max_examples=40, deadline=None)
def test_pde_residual_small(n, s, logr):
    b = Bubble(ProblemParams(n, s))
    assert pde_residual(b, 10.0**logr) <= 1e-8


def test_pde_residual_off_centre():
    p = ProblemParams(5, 1.0)
    b = Bubble.rescaled(p, 0.3)
    assert np.all(pde_residual(b, np.array([1e-3, 0.1, 1.0, 30.0])) <= 1e-8)


@pytest.mark.parametrize("n", [5, 6, 7])
@pytest.mark.parametrize("s", [0.5, 1.0, 1.5])
def test_rayleigh_ratio(n, s):
    lhs, rhs = rayleigh_ratio_identity(ProblemParams(n, s))
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_rayleigh_ratio_spot_value():
    assert rayleigh_ratio_exact(ProblemParams(5, 1.0)) == pytest.approx(45 / 7, abs=1e-14)


def test_low_dimensions_raise_integrability():
    for n in (3, 4):
        with pytest.raises(IntegrabilityError):
            l2_norm_squared(ProblemParams(n, 1.0))
        with pytest.raises(IntegrabilityError):
            rayleigh_ratio_identity(ProblemParams(n, 1.0))


def test_l2_norm_positive_and_finite():
    v = l2_norm_squared(ProblemParams(5, 1.0))
    assert 0 < v < np.inf


def test_bubble_rejects_bad_centre():
    with pytest.raises(ValueError):
        Bubble(ProblemParams(3, 0.0), X0=(0.0, 0.0))
    with pytest.raises(ValueError):
        Bubble(ProblemParams(3, 0.0), c0=-1.0)
