"""Closed-form moments, the sums S_n, the random index n_1 and the annealed gap.

For k >= 2 and a word omega the summands are

    a_k = k^{(alpha0 - alpha(sigma^{n-k} omega)) / alpha0}
    b_k = k^{(alpha0 - 2 alpha(sigma^{n-k} omega)) / alpha1}

and S_n = sum_{k=2}^{n} C3 a_k - C2 b_k.  Both summands are of the form
exp(-(c alpha - alpha0) t), so their expectations follow from the closed-form
moment E exp(-(c alpha - alpha0) t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import fft, integrate, optimize, special

from . import _kernels
from .errors import DomainError
from .inducing import TailFit, coefficient_range, fit_tail
from .maps import ParameterWindow, family_arrays
from .words import OmegaWord, draw_word, map_indexed, split_seed


# ---------------------------------------------------------------------------
# Closed-form moments

@dataclass(frozen=True)
class MomentQuery:
    c: float
    t: float
    window: ParameterWindow

    def __post_init__(self):
        if not self.c >= 1.0:
            raise DomainError(f"c must be >= 1, got {self.c}")
        if not self.t > 0.0:
            raise DomainError(f"t must be > 0, got {self.t}")


def closed_form_moment(q: MomentQuery) -> float:
    """E exp(-(c alpha - alpha0) t) for alpha uniform on the window."""
    a0, w = q.window.alpha0, q.window.width
    ct = q.c * q.t
    return math.exp(a0 * q.t * (1.0 - q.c)) * -math.expm1(-ct * w) / (ct * w)


def quadrature_moment(q: MomentQuery) -> float:
    """Independent oracle: adaptive quadrature of the same expectation."""
    a0, a1 = q.window.alpha0, q.window.alpha1
    val, _ = integrate.quad(lambda a: math.exp(-(q.c * a - a0) * q.t), a0, a1,
                            epsabs=1e-15, epsrel=1e-12, limit=200)
    return val / (a1 - a0)


def mc_moment(q: MomentQuery, n_samples: int, seed: int):
    """Monte Carlo mean and standard error of exp(-(c alpha - alpha0) t)."""
    if n_samples < 10_000:
        raise DomainError("n_samples must be at least 1e4")
    a = np.random.default_rng(seed).uniform(q.window.alpha0, q.window.alpha1, n_samples)
    v = np.exp(-(q.c * a - q.window.alpha0) * q.t)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(n_samples))


# ---------------------------------------------------------------------------
# S_n

@dataclass
class SnProfile:
    word: OmegaWord
    n: int
    a_terms: np.ndarray  # index k - 2
    b_terms: np.ndarray
    weights: tuple  # (C3, C2)

    @property
    def value(self) -> float:
        c3, c2 = self.weights
        return math.fsum(c3 * self.a_terms - c2 * self.b_terms)


def default_constants(family: str, window: ParameterWindow):
    """(C2, C3) from the family: C3 = alpha0 max c_alpha and
    C2 = alpha0 (alpha0 + 1) / 2 * (min c_alpha)^2 (f_alpha = 0)."""
    (c_min, c_max), _ = coefficient_range(family, window)
    a0 = window.alpha0
    return a0 * (a0 + 1.0) / 2.0 * c_min ** 2, a0 * c_max


def _summand_alphas(word: OmegaWord, n: int) -> np.ndarray:
    # alpha(sigma^{n-k} omega) for k = 2..n
    return word.coords(0, n - 1)[::-1]


def sn_profile(word: OmegaWord, n: int, C2: float, C3: float) -> SnProfile:
    if n < 2:
        raise DomainError("S_n needs n >= 2")
    if word.future_len < n - 1:
        raise DomainError(f"word needs {n - 1} future coordinates")
    w = word.window
    k = np.arange(2, n + 1, dtype=float)
    al = _summand_alphas(word, n)
    a = k ** ((w.alpha0 - al) / w.alpha0)
    b = k ** ((w.alpha0 - 2.0 * al) / w.alpha1)
    return SnProfile(word, n, a, b, (C3, C2))


def expected_sn(window: ParameterWindow, n: int, C2: float, C3: float) -> float:
    """E S_n through the closed-form moment (c = 1 and c = 2)."""
    a0, a1 = window.alpha0, window.alpha1
    total = []
    for k in range(2, n + 1):
        lk = math.log(k)
        ea = closed_form_moment(MomentQuery(1.0, lk / a0, window))
        eb = closed_form_moment(MomentQuery(2.0, lk / a1, window))
        total.append(C3 * ea - C2 * eb)
    return math.fsum(total)


def expected_a_b_sums(window: ParameterWindow, n: int):
    """(sum E a_k, sum E b_k) for k = 2..n, vectorized closed form."""
    a0, a1, w = window.alpha0, window.alpha1, window.width
    lk = np.log(np.arange(2, n + 1, dtype=float))
    ta, tb = lk / a0, lk / a1
    ea = -np.expm1(-ta * w) / (ta * w)
    eb = np.exp(-a0 * tb) * -np.expm1(-2.0 * tb * w) / (2.0 * tb * w)
    return math.fsum(ea), math.fsum(eb)


@numba.njit(cache=True)
def _sn_at_horizons(alphas, horizons, a0, a1, C2, C3):
    """S_h for every h in ``horizons`` using alphas[i] = alpha(omega_i)."""
    out = np.empty(horizons.shape[0])
    for j in range(horizons.shape[0]):
        h = horizons[j]
        s = 0.0
        for k in range(2, h + 1):
            lk = math.log(k)
            al = alphas[h - k]
            if C3 != 0.0:
                s += C3 * math.exp(lk * (a0 - al) / a0)
            if C2 != 0.0:
                s -= C2 * math.exp(lk * (a0 - 2.0 * al) / a1)
        out[j] = s
    return out


@numba.njit(cache=True)
def s_profile_direct(alphas, K, a0, a1, C2, C3):
    """S_k for k = 0..K by direct summation (O(K^2)); S_0 = S_1 = 0."""
    out = np.zeros(K + 1)
    for n in range(2, K + 1):
        s = 0.0
        for k in range(2, n + 1):
            lk = math.log(k)
            al = alphas[n - k]
            s += C3 * math.exp(lk * (a0 - al) / a0) - C2 * math.exp(lk * (a0 - 2.0 * al) / a1)
        out[n] = s
    return out


class ProfileConvolver:
    """S_k for k = 0..K for many words at once in O(K log K) per word.

    Writing alpha = m + h t with t in [-1, 1], each summand is
    exp(L (e0 + e1 t)) with L = log k, and the Jacobi-Anger expansion
    exp(z t) = I_0(z) + 2 sum_r I_r(z) T_r(t) separates it into
    sum_r d_r(k) T_r(t).  S_k is then a sum over r of linear convolutions of
    d_r with T_r(t_i), evaluated by FFT.  The series is truncated once every
    coefficient is below ``tol``.
    """

    def __init__(self, window: ParameterWindow, K: int, C2: float, C3: float,
                 tol: float = 1e-18, max_degree: int = 80):
        self.window, self.K, self.C2, self.C3 = window, K, C2, C3
        a0, a1 = window.alpha0, window.alpha1
        m, h = 0.5 * (a0 + a1), 0.5 * (a1 - a0)
        j = np.arange(K + 1, dtype=float)
        L = np.zeros(K + 1)
        L[2:] = np.log(j[2:])
        terms = []
        for weight, e0, e1 in ((C3, (a0 - m) / a0, -h / a0),
                               (-C2, (a0 - 2.0 * m) / a1, -2.0 * h / a1)):
            if weight == 0.0:
                continue
            z = L * e1
            scale = weight * np.exp(L * e0 + np.abs(z))
            terms.append((scale, np.abs(z), np.sign(z)))
        coeffs = []
        for r in range(max_degree + 1):
            d = np.zeros(K + 1)
            for scale, az, sg in terms:
                d += (1.0 if r == 0 else 2.0) * scale * special.ive(r, az) * sg ** r
            d[:2] = 0.0
            coeffs.append(d)
            if r > 0 and np.abs(d).max() < tol:
                break
        else:
            raise DomainError("Chebyshev series did not converge")
        self.degree = len(coeffs) - 1
        self.nfft = fft.next_fast_len(2 * K + 1, real=True)
        self.coeff_hat = [fft.rfft(d, self.nfft) for d in coeffs]

    def profiles(self, alphas: np.ndarray) -> np.ndarray:
        """alphas: (n_words, >= K-1) with alphas[:, i] = alpha(omega_i)."""
        alphas = np.atleast_2d(alphas)[:, : self.K - 1]
        w = self.window
        t = (2.0 * alphas - (w.alpha0 + w.alpha1)) / w.width
        acc = np.zeros((t.shape[0], self.nfft // 2 + 1), dtype=complex)
        t_prev, t_cur = np.ones_like(t), t
        for r, d_hat in enumerate(self.coeff_hat):
            if r == 0:
                tr = t_prev
            elif r == 1:
                tr = t_cur
            else:
                t_prev, t_cur = t_cur, 2.0 * t * t_cur - t_prev
                tr = t_cur
            acc += fft.rfft(tr, self.nfft, axis=1) * d_hat
        out = fft.irfft(acc, self.nfft, axis=1)[:, : self.K + 1]
        out[:, :2] = 0.0
        return out


def s_profile(word: OmegaWord, K: int, C2: float, C3: float, method="auto") -> np.ndarray:
    """S_k(omega) for k = 0..K."""
    if word.future_len < K - 1:
        raise DomainError(f"word needs {K - 1} future coordinates")
    w = word.window
    al = np.ascontiguousarray(word.coords(0, max(K - 1, 0)))
    if method == "direct" or (method == "auto" and K <= 2000):
        return s_profile_direct(al, K, w.alpha0, w.alpha1, C2, C3)
    return ProfileConvolver(w, K, C2, C3).profiles(al)[0]


# ---------------------------------------------------------------------------
# The C4 limit

@dataclass
class C4LimitResult:
    horizons: np.ndarray
    values: np.ndarray  # (log n / n) mean S_n
    std_errors: np.ndarray
    expected: np.ndarray  # (log n / n) E S_n from the closed form
    predicted_limit: float  # C3 alpha0 / (alpha1 - alpha0)
    relative_change: float  # between the last horizon and one decade earlier
    stabilized: bool

    @property
    def c4_empirical(self) -> float:
        return float(self.values[-1])


def _word_sn(seed, window, horizons, C2, C3):
    word = draw_word(seed, window, 0, int(horizons[-1]) - 1)
    return _sn_at_horizons(np.ascontiguousarray(word.params), horizons,
                           window.alpha0, window.alpha1, C2, C3)


def lemma4_limit(window: ParameterWindow, C2: float, C3: float, horizons,
                 n_words: int, seed: int, workers: int = 1,
                 stabilization_tol: float = 0.05) -> C4LimitResult:
    horizons = np.asarray(sorted(set(int(h) for h in horizons)), dtype=np.int64)
    if n_words < 100:
        raise DomainError("n_words must be at least 100")
    if horizons[0] < 2:
        raise DomainError("horizons must be >= 2")
    rows = np.array(map_indexed(
        _word_sn, [(split_seed(seed, i), window, horizons, C2, C3) for i in range(n_words)],
        workers))
    scale = np.log(horizons) / horizons
    values = scale * rows.mean(axis=0)
    se = scale * rows.std(axis=0, ddof=1) / math.sqrt(n_words)
    expected = np.array([scale[i] * (C3 * ea - C2 * eb) for i, (ea, eb) in
                         enumerate(expected_a_b_sums(window, int(h)) for h in horizons)])
    last = horizons[-1]
    earlier = int(np.argmin(np.abs(np.log(horizons) - math.log(last / 10.0))))
    denom = abs(values[-1]) if values[-1] != 0 else 1.0
    rel = float(abs(values[-1] - values[earlier]) / denom)
    if values[-1] == 0 and values[earlier] == 0:
        rel = 0.0
    return C4LimitResult(horizons, values, se, expected,
                        C3 * window.alpha0 / window.width, rel, rel <= stabilization_tol)


# ---------------------------------------------------------------------------
# n_1

@dataclass
class N1Value:
    value: int
    censored: bool


def n1_from_profile(S: np.ndarray, C4: float, N_start: int, horizon: int) -> N1Value:
    """Smallest n >= N_start with (log k / k) S_k >= C4/4 for k in [n, horizon]."""
    if N_start < 2:
        raise DomainError("N_start must be at least 2")
    k = np.arange(N_start, horizon + 1)
    ok = np.log(k) / k * S[N_start: horizon + 1] >= C4 / 4.0
    bad = np.flatnonzero(~ok)
    if len(bad) == 0:
        return N1Value(int(N_start), False)
    last = int(k[bad[-1]])
    return N1Value(last + 1, last == horizon)


def n1_empirical(word: OmegaWord, C4: float, N_start: int, horizon: int,
                 C2: float, C3: float) -> N1Value:
    return n1_from_profile(s_profile(word, horizon, C2, C3), C4, N_start, horizon)


def n_start_rule(window: ParameterWindow, C2: float, C3: float, C4: float,
                 horizon: int) -> int:
    """Smallest N with C4/2 <= (log n / n) E S_n <= 3 C4/2 for N <= n <= horizon."""
    n = np.arange(2, horizon + 1)
    lk = np.log(n.astype(float))
    ta, tb = lk / window.alpha0, lk / window.alpha1
    w = window.width
    ea = -np.expm1(-ta * w) / (ta * w)
    eb = np.exp(-window.alpha0 * tb) * -np.expm1(-2.0 * tb * w) / (2.0 * tb * w)
    es = np.cumsum(C3 * ea - C2 * eb)
    r = lk / n * es
    good = (r >= C4 / 2.0) & (r <= 1.5 * C4)
    bad = np.flatnonzero(~good)
    if len(bad) == 0:
        return 2
    if bad[-1] == len(n) - 1:
        raise DomainError("band condition fails at the horizon")
    return int(n[bad[-1] + 1])


def _n1_batch(seeds, window, C4, N_start, horizon, C2, C3):
    conv = ProfileConvolver(window, horizon, C2, C3)
    al = np.array([draw_word(s, window, 0, horizon - 1).params for s in seeds])
    S = conv.profiles(al)
    res = [n1_from_profile(row, C4, N_start, horizon) for row in S]
    return [(r.value, r.censored) for r in res]


def n1_sample(window: ParameterWindow, C4: float, N_start: int, horizon: int,
              C2: float, C3: float, n_words: int, seed: int, workers: int = 1,
              batch: int = 250):
    """n_1 over ``n_words`` words; returns (values, censored) arrays."""
    seeds = [split_seed(seed, i) for i in range(n_words)]
    chunks = [(seeds[i:i + batch], window, C4, N_start, horizon, C2, C3)
              for i in range(0, n_words, batch)]
    out = [pair for part in map_indexed(_n1_batch, chunks, workers) for pair in part]
    vals = np.array([v for v, _ in out], dtype=np.int64)
    cens = np.array([c for _, c in out], dtype=bool)
    return vals, cens


def empirical_tail(values: np.ndarray, n_grid: np.ndarray) -> np.ndarray:
    """P(value > n) for each n in n_grid."""
    v = np.sort(values)
    return 1.0 - np.searchsorted(v, n_grid, side="right") / len(v)


@dataclass
class StretchedExpFit:
    C: float
    u: float
    v: float
    v_raw: float  # unconstrained regression exponent
    n_points: int

    def __call__(self, n):
        return self.C * np.exp(-self.u * np.asarray(n, dtype=float) ** self.v)

    def dominates(self, n, tail) -> bool:
        n, tail = np.asarray(n), np.asarray(tail)
        return bool(np.all(tail <= self(n) * (1.0 + 1e-12)))


def tail_upper_bound(tail, n_samples: int, confidence: float = 0.999) -> np.ndarray:
    """One-sided Clopper-Pearson upper bound for each empirical tail value."""
    from scipy.stats import beta as beta_dist
    k = np.rint(np.asarray(tail) * n_samples)
    ub = beta_dist.ppf(confidence, k + 1, n_samples - k)
    return np.where(k >= n_samples, 1.0, ub)


def _profile_residual(v, n, y):
    A = np.column_stack([np.ones_like(n), n ** v])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    return float(r @ r), coef


def fit_stretched_exponential(n, tail, v_max: float = 0.95,
                              v_min: float = 0.05) -> StretchedExpFit:
    """Envelope C exp(-u n^v) over a tail profile, with v in (0, 1).

    With three or more points in 0 < P < 1, v minimizes the least squares
    residual of -log P = -log C + u n^v (profiled over C and u); with two,
    it is the log-log slope of -log P.  v is then clipped into
    [v_min, v_max] (a tail decaying faster than every stretched exponential
    is still dominated by one with v < 1), u is refitted at that v, and C is
    raised until the curve lies above every positive point.
    """
    n = np.asarray(n, dtype=float)
    tail = np.asarray(tail, dtype=float)
    inner = (tail > 0) & (tail < 1)
    ni, yi = n[inner], -np.log(tail[inner])
    if inner.sum() >= 3:
        res = optimize.minimize_scalar(lambda v: _profile_residual(v, ni, yi)[0],
                                       bounds=(0.01, 5.0), method="bounded",
                                       options={"xatol": 1e-10})
        v_raw = float(res.x)
    elif inner.sum() == 2:
        v_raw = float(np.polyfit(np.log(ni), np.log(yi), 1)[0])
    else:
        v_raw = math.nan
    v = v_max if not np.isfinite(v_raw) else min(max(v_raw, v_min), v_max)
    if inner.sum() >= 2:
        _, (neg_log_c, u) = _profile_residual(v, ni, yi)
    elif inner.sum() == 1:
        u, neg_log_c = yi[0] / ni[0] ** v, 0.0
    else:
        u, neg_log_c = 1.0, 0.0
    u = max(float(u), 1e-12)
    log_c = -float(neg_log_c)
    pos = tail > 0
    if pos.any():
        log_c = max(log_c, float(np.max(np.log(tail[pos]) + u * n[pos] ** v)))
    return StretchedExpFit(math.exp(log_c), u, v, v_raw, int(inner.sum()))


# ---------------------------------------------------------------------------
# Annealed gap E[X_{n-1} - X_n]

@dataclass
class AnnealedGap:
    horizons: np.ndarray
    mean_gap: np.ndarray
    std_errors: np.ndarray
    all_positive: bool
    fit: TailFit | None


def _word_gaps(seed, family, window, horizons):
    ns = np.unique(np.concatenate([horizons - 1, horizons]))
    ns = ns[ns >= 1]
    word = draw_word(seed, window, 0, int(ns[-1]))
    a, xa, c = family_arrays(family, word.params, window)
    vals = _kernels.x_chain(a, xa, c, ns)
    lookup = dict(zip(ns.tolist(), vals.tolist()))
    lookup[0] = 1.0
    return np.array([lookup[h - 1] - lookup[h] for h in horizons.tolist()])


def annealed_gap(family: str, window: ParameterWindow, horizons, n_words: int,
                 seed: int, workers: int = 1, fit_range=None) -> AnnealedGap:
    horizons = np.asarray(sorted(set(int(h) for h in horizons)), dtype=np.int64)
    if n_words < 2:
        raise DomainError("need at least two words")
    if horizons[0] < 1:
        raise DomainError("horizons must be >= 1")
    gaps = np.array(map_indexed(
        _word_gaps, [(split_seed(seed, i), family, window, horizons) for i in range(n_words)],
        workers))
    mean = gaps.mean(axis=0)
    se = gaps.std(axis=0, ddof=1) / math.sqrt(n_words)
    fit = None
    if fit_range is not None:
        fit = fit_tail(horizons, mean, fit_range, 1.0 / window.alpha0, min_points=4)
    return AnnealedGap(horizons, mean, se, bool(np.all(gaps > 0)), fit)
