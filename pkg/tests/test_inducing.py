import math

import numpy as np
import pytest
from scipy.optimize import brentq

from randtower.errors import AxiomError, DomainError
from randtower.inducing import (beta_lower_bound, comparison_sequences, fit_tail,
                                geometric_schedule, partial_sum, partition_check,
                                return_tail, x_sequence)
from randtower.maps import CLASSIC, MOVING, make_map
from randtower.tails import default_constants, n1_empirical
from randtower.words import constant_word, draw_word, split_seed

ROOT_HALF = 0.2849201454990266  # mpmath bisection, see test_maps


def _oracle_xn(word, family, n):
    """X_n by brentq on each left branch, innermost first."""
    maps = [make_map(family, word.alpha_at(j), word.window) for j in range(n)]
    y = maps[n - 1].x_alpha
    for j in range(n - 2, -1, -1):
        m = maps[j]
        y = brentq(lambda x: x + m.c_alpha * x ** (1 + m.alpha) - y, 0.0, m.x_alpha,
                   xtol=1e-300, rtol=1e-15)
    return y


def test_first_terms(window):
    w = draw_word(3, window, 0, 10)
    xs = x_sequence(w, MOVING, 10, "all")
    assert xs[0] == 1.0
    assert xs[1] == make_map(MOVING, w.alpha_at(0), window).x_alpha
    c = x_sequence(constant_word(0.5, window, 0, 2), CLASSIC, 2, "all")
    assert c[2] == pytest.approx(ROOT_HALF, abs=1e-14)


@pytest.mark.parametrize("family", [CLASSIC, MOVING])
def test_against_brentq_oracle(family, window):
    w = draw_word(17, window, 0, 40)
    xs = x_sequence(w, family, 40, "all")
    for n in (2, 3, 7, 15, 40):
        ref = _oracle_xn(w, family, n)
        assert xs[n] == pytest.approx(ref, rel=1e-12)


def test_monotone_and_small(window):
    w = draw_word(5, window, 0, 2 ** 16)
    xs = x_sequence(w, CLASSIC, 2 ** 16)
    assert np.all(np.diff(xs.values) < 0)
    assert xs[2 ** 16] < 1e-2
    assert xs.indices[0] == 0 and 2 ** 16 in xs.indices
    lo, hi = xs.interval(2)
    assert lo == xs[2] and hi == xs[1]


def test_short_word_rejected(window):
    with pytest.raises(DomainError):
        x_sequence(draw_word(1, window, 0, 5), CLASSIC, 6)


def test_schedule():
    s = geometric_schedule(100, extra=[77])
    assert s[0] == 0 and s[1] == 1 and 77 in s and s[-1] <= 100
    assert np.all(np.diff(s) > 0)


def test_partition_constant_classic(window):
    rep = partition_check(constant_word(0.5, window, 0, 31), CLASSIC, 30)
    assert rep.passed and rep.max_residual <= 1e-10
    # n = 1 boundary: right image of x_alpha is 0, left limit is 1
    assert rep.boundary_right == 0.0
    assert rep.boundary_left == pytest.approx(1.0, abs=1e-14)


def test_partition_moving_random(window):
    rep = partition_check(draw_word(8, window, 0, 31), MOVING, 30)
    assert rep.passed and rep.max_residual <= 1e-10


def test_beta(window):
    assert beta_lower_bound(CLASSIC, window) == pytest.approx(2.0, abs=1e-8)
    assert beta_lower_bound(MOVING, window) == pytest.approx(2.0, abs=1e-8)
    with pytest.raises(AxiomError):
        beta_lower_bound("UnitSlope", window)


def test_return_tail(window):
    w = draw_word(2, window, 0, 100)
    rt = return_tail(x_sequence(w, MOVING, 100))
    assert rt.n[0] == 0 and rt.tail[0] == 1.0
    assert rt.p_return_one == pytest.approx(1 - make_map(MOVING, w.alpha_at(0), window).x_alpha)
    assert rt.p_return_one > 0


def test_partial_sums_converge(window):
    # exact sum to 1e4 against a rigorous upper bound of the sum to 1e5
    w = draw_word(4, window, 0, 10_000)
    s4 = partial_sum(w, CLASSIC, 10_000)
    comp = comparison_sequences(CLASSIC, window, 100_000)
    s5_upper = s4 + math.fsum(comp.upper[10_001:])
    assert s4 >= 0.9 * s5_upper


def test_fit_synthetic():
    n = np.arange(1, 1000)
    f = fit_tail(n, n ** -2.0, (10, 999))
    assert f.slope == pytest.approx(-2.0, abs=1e-6) and f.r2 > 0.999999
    f = fit_tail(n[1:], n[1:] ** -3.0 * np.log(n[1:]) ** 2, (10, 999), log_correction_exponent=2.0)
    assert f.slope == pytest.approx(-3.0, abs=1e-9)
    with pytest.raises(DomainError):
        fit_tail(n, -n.astype(float), (10, 999))
    with pytest.raises(DomainError):
        fit_tail(n, n ** -2.0, (10, 15))


@pytest.mark.parametrize("a", [0.4, 0.5, 0.6])
def test_constant_word_slope(a, window):
    xs = x_sequence(constant_word(a, window, 0, 2 ** 16), CLASSIC, 2 ** 16)
    f = fit_tail(xs.indices, xs.values, (2 ** 8, 2 ** 16))
    assert f.slope == pytest.approx(-1 / a, abs=0.05)


@pytest.mark.parametrize("family", [CLASSIC, MOVING])
def test_sandwich_and_two_sided_bound(family, window):
    N = 2 ** 14
    comp = comparison_sequences(family, window, N)
    C0 = comp.two_sided_constant()
    n = np.arange(1, N + 1)
    assert np.all(comp.lower[n] >= 1 / (C0 * n ** (1 / 0.4)) * (1 - 1e-12))
    assert np.all(comp.upper[n] <= C0 * n ** (-1 / 0.6) * (1 + 1e-12))
    for s in range(4):
        xs = x_sequence(draw_word(split_seed(31, s), window, 0, N), family, N)
        idx = xs.indices
        assert np.all(comp.lower[idx] <= xs.values)
        assert np.all(xs.values <= comp.upper[idx])
        f = fit_tail(idx, xs.values, (2 ** 8, N))
        assert -2.6 <= f.slope <= -1.567


def test_log_corrected_tail(window):
    # X_n n^{1/a0} (log n)^{-1/a0} for n >= n1: calibrate on words 0..19,
    # check on words 20..39
    N = 2 ** 14
    C2, C3 = default_constants(CLASSIC, window)

    def ratios(i):
        w = draw_word(split_seed(77, i), window, 0, N)
        n1 = n1_empirical(w, 1.33, 2, N, C2, C3).value
        xs = x_sequence(w, CLASSIC, N)
        keep = xs.indices >= max(n1, 3)
        n = xs.indices[keep].astype(float)
        return xs.values[keep] * n ** 2.5 / np.log(n) ** 2.5

    C = max(ratios(i).max() for i in range(20))
    for i in range(20, 40):
        assert np.all(ratios(i) <= C)
