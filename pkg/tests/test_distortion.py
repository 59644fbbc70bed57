import math

import numpy as np
import pytest

from randtower.distortion import (distortion_ratio, induced_log_distortion, orbit_derivative,
                                  return_time, sample_pairs, separation_of_images,
                                  separation_time)
from randtower.errors import DomainError
from randtower.inducing import beta_lower_bound, x_sequence
from randtower.maps import CLASSIC, MOVING, make_map
from randtower.words import constant_word, draw_word, shift


def test_orbit_derivative_basics(window):
    w = draw_word(1, window, 0, 5)
    assert orbit_derivative(w, CLASSIC, 0.8, 1).log_deriv == pytest.approx(math.log(2.0))
    od = orbit_derivative(w, CLASSIC, 0.3, 0)
    assert od.log_deriv == 0.0 and od.image == 0.3
    with pytest.raises(DomainError):
        orbit_derivative(w, CLASSIC, 0.0, 2)


def test_orbit_derivative_finite_difference(window):
    w = constant_word(0.5, window, 0, 3)
    m = make_map(CLASSIC, 0.5, window)
    h = 1e-7
    t3 = lambda x: m.eval(m.eval(m.eval(x)))
    fd = (t3(0.9 + h) - t3(0.9 - h)) / (2 * h)
    od = orbit_derivative(w, CLASSIC, 0.9, 3)
    assert math.exp(od.log_deriv) == pytest.approx(fd, rel=1e-4)
    # product of closed-form derivatives along the orbit
    prod = np.prod([m.deriv(p, 1) for p in od.orbit[:-1]])
    assert math.exp(od.log_deriv) == pytest.approx(prod, rel=1e-13)


def _interior(word, family, n, t):
    xs = x_sequence(word, family, n, [n - 1, n])
    lo, hi = xs.interval(n)
    return lo + t * (hi - lo)


def test_ratio_trivial_and_errors(window):
    w = draw_word(2, window, 0, 10)
    x = _interior(w, MOVING, 6, 0.3)
    assert distortion_ratio(w, MOVING, x, x, 6).quotient == 0.0
    assert induced_log_distortion(w, MOVING, x, x, 6).quotient == 0.0
    with pytest.raises(DomainError):
        distortion_ratio(w, MOVING, x, _interior(w, MOVING, 5, 0.5), 6)


def test_n1_affine_branch(window):
    # I_1 is the affine right branch: no distortion at all (M = 0)
    w = draw_word(3, window, 0, 2)
    assert distortion_ratio(w, MOVING, 0.7, 0.95, 1).value == pytest.approx(0.0, abs=1e-15)


def test_constant_word_n5(window):
    w = constant_word(0.5, window, 0, 5)
    x, y = _interior(w, CLASSIC, 5, 0.01), _interior(w, CLASSIC, 5, 0.99)
    K = distortion_ratio(w, CLASSIC, x, y, 5).quotient
    C = induced_log_distortion(w, CLASSIC, x, y, 5).quotient
    beta = beta_lower_bound(CLASSIC, window)
    assert math.isfinite(C) and 0 < C <= K * (1 + 1 / beta)


@pytest.mark.parametrize("family", [CLASSIC, MOVING])
def test_log_distortion_bound_on_batches(family, window):
    beta = beta_lower_bound(family, window)
    w = draw_word(4, window, 0, 40)
    rng = np.random.default_rng(0)
    for n in (2, 5, 11):
        b = sample_pairs(w, family, n, 300, rng)
        K = b.k_samples().max()
        assert np.all(b.c_samples() <= K * (1 + 1 / beta) + 1e-12)
        # induced map expands by more than beta
        assert min(b.log_deriv_x.min(), b.log_deriv_y.min()) > math.log(beta)


def _oracle_separation(word, family, x, y, horizon=30):
    """Separation by locating the points in the X_n partition of each shifted word."""
    s = 0
    while s < horizon:
        xs = x_sequence(word, family, 200, "all")
        # R(p) = n for p in (X_n, X_{n-1}]
        rx = int(np.searchsorted(-xs.values, -x, side="left"))
        ry = int(np.searchsorted(-xs.values, -y, side="left"))
        if rx != ry:
            return s
        x = orbit_derivative(word, family, x, rx).image
        y = orbit_derivative(word, family, y, rx).image
        word = shift(word, rx)
        s += 1
    return s


def test_return_time_matches_partition(window):
    w = draw_word(6, window, 0, 300)
    xs = x_sequence(w, MOVING, 50, "all")
    for n in (1, 2, 3, 10, 50):
        lo, hi = xs.interval(n)
        assert return_time(w, MOVING, 0.5 * (lo + hi)) == n
        assert return_time(w, MOVING, lo + 0.999 * (hi - lo)) == n


def test_separation_against_oracle(window):
    w = draw_word(9, window, 0, 4000)
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.uniform(0.05, 1.0)
        y = x + 10 ** rng.uniform(-7, -2)
        if y > 1.0:
            continue
        st = separation_time(w, MOVING, x, y, 30)
        if not st.censored:
            assert st.s == _oracle_separation(w, MOVING, x, y)


def test_separation_trivial(window):
    w = draw_word(10, window, 0, 500)
    xs = x_sequence(w, CLASSIC, 5, "all")
    a = 0.5 * sum(xs.interval(2))
    b = 0.5 * sum(xs.interval(4))
    assert separation_time(w, CLASSIC, a, b).s == 0
    st = separation_time(w, CLASSIC, 0.3, 0.3, horizon=12)
    assert st.s == 12 and st.censored


def test_separation_gap_bound(window):
    beta = beta_lower_bound(CLASSIC, window)
    w = draw_word(11, window, 0, 20_000)
    b = sample_pairs(w, CLASSIC, 3, 1000, np.random.default_rng(5))
    s, _ = separation_of_images(w, CLASSIC, b, 64)
    assert np.all(b.image_gap <= beta ** (-s.astype(float)))
