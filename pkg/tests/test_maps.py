import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randtower.errors import DomainError
from randtower.maps import (CLASSIC, MOVING, MapDescriptor, ParameterWindow, branch_point,
                            make_map, schwarzian, validate_axioms)

# root of x + sqrt(2) x^1.5 = 0.5, by 40-digit bisection (mpmath)
ROOT_HALF = 0.2849201454990266
# 0.25 (1 + sqrt(2) sqrt(0.25)), 40-digit arithmetic
EVAL_QUARTER = 0.4267766952966369


def test_window_validation():
    with pytest.raises(DomainError):
        ParameterWindow(0.6, 0.4)
    with pytest.raises(DomainError):
        ParameterWindow(0.0, 0.5)
    with pytest.raises(DomainError):
        ParameterWindow(0.5, 1.0)


def test_classic_form(window):
    m = make_map(CLASSIC, 0.5, window)
    assert m.x_alpha == 0.5 and m.c_alpha == pytest.approx(2 ** 0.5)
    assert m.eval(0.0) == 0.0
    assert m.eval(0.25) == pytest.approx(EVAL_QUARTER, abs=1e-15)
    assert m.eval(0.75) == pytest.approx(0.5, abs=1e-15)


def test_moving_boundary(window):
    xs = [make_map(MOVING, a, window).x_alpha for a in (0.4, 0.5, 0.6)]
    assert xs == pytest.approx([0.5, 0.6, 0.7])
    m = make_map(MOVING, 0.6, window)
    assert m.eval(1.0) == pytest.approx(1.0, abs=1e-15)
    assert m.c_alpha == pytest.approx((1 - 0.7) / 0.7 ** 1.6)
    # left branch reaches 1 at x_alpha
    assert m.left(m.x_alpha) == pytest.approx(1.0, abs=1e-14)


def test_eval_domain(window):
    m = make_map(CLASSIC, 0.5, window)
    for bad in (-0.1, 1.1, math.nan, math.inf):
        with pytest.raises(DomainError):
            m.eval(bad)
    with pytest.raises(DomainError):
        make_map(CLASSIC, 0.7, window)


@pytest.mark.parametrize("family", [CLASSIC, MOVING])
def test_neutral_form_exact(family, window):
    m = make_map(family, 0.47, window)
    x = np.linspace(0, m.x_alpha, 200, endpoint=False)
    assert np.array_equal(m.eval(x), x + m.c_alpha * x ** (1 + m.alpha))


def test_derivative_examples(window):
    m = make_map(CLASSIC, 0.5, window)
    assert m.deriv(1e-14, 1) == pytest.approx(1.0, abs=1e-6)
    assert m.deriv(0.0, 1) == 1.0
    for a in (0.4, 0.55, 0.6):
        assert make_map(CLASSIC, a, window).deriv(0.75, 1) == 2.0
    mb = make_map(MOVING, 0.45, window)
    expect = 1 + mb.c_alpha * 1.45 * 0.1 ** 0.45
    assert mb.deriv(0.1, 1) == pytest.approx(expect, rel=1e-14)
    h = 1e-6
    fd = (mb.eval(0.1 + h) - mb.eval(0.1 - h)) / (2 * h)
    assert fd == pytest.approx(expect, rel=1e-6)


def test_derivative_errors(window):
    m = make_map(CLASSIC, 0.5, window)
    with pytest.raises(DomainError):
        m.deriv(0.5, 1)
    assert m.deriv(0.5, 1, branch="right") == 2.0
    with pytest.raises(DomainError):
        m.deriv(0.0, 3)


@pytest.mark.parametrize("family", [CLASSIC, MOVING])
@pytest.mark.parametrize("order", [2, 3])
def test_derivatives_match_finite_differences(family, order, window):
    m = make_map(family, 0.53, window)
    h = 1e-6
    xs = np.concatenate([np.linspace(0.02, m.x_alpha - 0.02, 25),
                         np.linspace(m.x_alpha + 0.02, 0.98, 10)])
    for x in xs:
        fd = (m.deriv(x + h, order - 1) - m.deriv(x - h, order - 1)) / (2 * h)
        exact = m.deriv(x, order)
        assert fd == pytest.approx(exact, rel=1e-5, abs=1e-9)


def test_schwarzian_sign(window):
    assert make_map(CLASSIC, 0.5, window).schwarzian(0.3) < 0
    assert make_map(MOVING, 0.4, window).schwarzian(0.2) < 0
    with pytest.raises(DomainError):
        make_map(CLASSIC, 0.5, window).schwarzian(0.0)


def test_schwarzian_of_affine_is_zero():
    class Affine:
        def deriv(self, x, order):
            return {1: 3.0, 2: 0.0, 3: 0.0}[order]
    assert schwarzian(Affine(), 0.4) == 0.0


def test_invert_left_examples(window):
    m = make_map(CLASSIC, 0.5, window)
    assert m.invert_left(0.0) == 0.0
    assert m.invert_left(0.5) == pytest.approx(ROOT_HALF, abs=1e-14)
    mb = make_map(MOVING, 0.58, window)
    y = np.nextafter(1.0, 0.0)
    assert mb.x_alpha - 1e-12 < mb.invert_left(y) < mb.x_alpha


def test_invert_left_monotone(window):
    m = make_map(MOVING, 0.43, window)
    y = np.sort(np.random.default_rng(0).random(5000))
    x = m.invert_left(y)
    assert np.all(np.diff(x) >= 0)


@settings(max_examples=200, deadline=None)
@given(family=st.sampled_from([CLASSIC, MOVING]),
       alpha=st.floats(0.4, 0.6), u=st.floats(0.0, 1.0, exclude_max=True))
def test_inverse_roundtrip(family, alpha, u):
    m = make_map(family, alpha, ParameterWindow(0.4, 0.6))
    x = u * m.x_alpha
    assert m.invert_left(m.eval(x)) == pytest.approx(x, abs=1e-12)
    assert m.eval(m.invert_left(u)) == pytest.approx(u, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(family=st.sampled_from([CLASSIC, MOVING]), alpha=st.floats(0.4, 0.6),
       x=st.floats(1e-3, 1.0))
def test_expansion_away_from_zero(family, alpha, x):
    m = make_map(family, alpha, ParameterWindow(0.4, 0.6))
    if abs(x - m.x_alpha) < 1e-12:
        return
    assert m.deriv(x, 1) >= 1 + 1e-4


@pytest.mark.parametrize("family", [CLASSIC, MOVING])
def test_validate_builtin(family, window):
    rep = validate_axioms(family, window, 500)
    assert rep.passed, rep.failures()
    if family == MOVING:
        assert rep.x_alpha_range[1] > rep.x_alpha_range[0]


def test_validate_broken_fixtures(window):
    rep = validate_axioms("BrokenSlope", window, 200)
    assert "A2" in rep.failures()
    assert not validate_axioms("UnitSlope", window, 200).passed


def test_branch_point_vectorized(window):
    a = np.array([0.4, 0.6])
    assert np.allclose(branch_point(MOVING, a, window), [0.5, 0.7])
    assert np.allclose(branch_point(CLASSIC, a, window), [0.5, 0.5])
