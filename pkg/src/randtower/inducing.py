"""Induced full-branch map: the sequence X_n(omega), return times, beta.

I_n(omega) = (X_n(omega), X_{n-1}(omega)] is the set where the return time
equals n, so m{R > n} = X_n(omega).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats

from . import _kernels
from .errors import AxiomError, DomainError, NumericalInvariantError
from .maps import ParameterWindow, branch_point, make_map, neutral_coefficient
from .words import OmegaWord, shift


@dataclass(eq=False)
class XnSequence:
    word: OmegaWord
    family: str
    indices: np.ndarray  # strictly increasing, starts at 0
    values: np.ndarray

    def __getitem__(self, n):
        i = np.searchsorted(self.indices, n)
        if i == len(self.indices) or self.indices[i] != n:
            raise KeyError(f"X_{n} was not computed")
        return float(self.values[i])

    def interval(self, n):
        """I_n = (X_n, X_{n-1}] as a (left, right) pair."""
        return self[n], self[n - 1]

    def as_dict(self):
        return dict(zip(self.indices.tolist(), self.values.tolist()))


def geometric_schedule(N: int, extra=()) -> np.ndarray:
    """0, 1 and ceil(2^(k/2)) up to N, plus any ``extra`` indices."""
    k_max = int(math.floor(2 * math.log2(max(N, 1)))) + 1
    ks = np.ceil(2.0 ** (np.arange(k_max + 1) / 2.0)).astype(np.int64)
    out = np.concatenate([[0, 1], ks[ks <= N], np.asarray(extra, dtype=np.int64)])
    return np.unique(out[(out >= 0) & (out <= N)])


def x_sequence(word: OmegaWord, family: str, N: int, schedule="geometric") -> XnSequence:
    """X_n(omega) for the scheduled n <= N.

    ``schedule`` is 'geometric', 'all' (every n, O(N^2) inversions) or an
    explicit collection of indices.
    """
    if N < 1:
        raise DomainError("N must be at least 1")
    if word.future_len < N:
        raise DomainError(f"word stores {word.future_len} future coordinates, need {N}")
    if isinstance(schedule, str):
        if schedule == "geometric":
            ns = geometric_schedule(N)
        elif schedule == "all":
            ns = np.arange(N + 1, dtype=np.int64)
        else:
            raise DomainError(f"unknown schedule {schedule!r}")
    else:
        ns = np.unique(np.concatenate([[0], np.asarray(schedule, dtype=np.int64)]))
        if ns[-1] > N or ns[0] < 0:
            raise DomainError("schedule indices must lie in [0, N]")
    a, xa, c = word.arrays(family, 0, int(ns[-1]) if ns[-1] > 0 else 1)
    vals = np.empty(len(ns))
    vals[0] = 1.0
    vals[1:] = _kernels.x_chain(a, xa, c, ns[1:])
    if not np.all(np.diff(vals) < 0):
        bad = int(np.argmin(np.diff(vals)))
        raise NumericalInvariantError(
            f"X_n not strictly decreasing at n={ns[bad + 1]}; root finder fault")
    if not (vals[-1] > 0):
        raise NumericalInvariantError("X_n underflowed to 0")
    return XnSequence(word, family, ns, vals)


@dataclass
class PartitionReport:
    residuals: np.ndarray  # residuals[n-2] for n = 2..n_max
    boundary_right: float  # T(x_alpha) on the right branch (should be 0)
    boundary_left: float  # left-branch limit at x_alpha (should be 1)
    tol: float = 1e-10

    @property
    def max_residual(self):
        return float(self.residuals.max()) if len(self.residuals) else 0.0

    @property
    def passed(self):
        return (self.max_residual <= self.tol and abs(self.boundary_right) <= self.tol
                and abs(self.boundary_left - 1.0) <= self.tol)


def partition_check(word: OmegaWord, family: str, n_max: int, tol=1e-10) -> PartitionReport:
    """Check T_{omega_0}(I_n(omega)) = I_{n-1}(sigma omega) at the endpoints."""
    xs = x_sequence(word, family, n_max, "all")
    xs_shift = x_sequence(shift(word, 1), family, n_max - 1, "all") if n_max > 1 else None
    m = make_map(family, word.alpha_at(0), word.window)
    res = []
    for n in range(2, n_max + 1):
        res.append(abs(m.eval(xs[n]) - xs_shift[n - 1]))
    return PartitionReport(np.array(res), m.right(m.x_alpha), m.left(m.x_alpha), tol)


def beta_lower_bound(family: str, window: ParameterWindow, grid_size: int = 500,
                     margin: float = 1e-9) -> float:
    """min over alpha and x in [x_alpha, 1] of T'(x), less ``margin``."""
    if grid_size < 100:
        raise DomainError("grid_size must be at least 100")
    best = np.inf
    for a in window.grid(grid_size):
        m = make_map(family, a, window)
        xs = np.linspace(m.x_alpha, 1.0, grid_size)
        best = min(best, float(np.min(m.deriv(xs, 1, branch="right"))))
    beta = best - margin
    if not beta > 1.0:
        raise AxiomError(f"right-branch expansion bound {beta} does not exceed 1")
    return beta


@dataclass
class ReturnTail:
    n: np.ndarray
    tail: np.ndarray  # m{R > n} = X_n
    p_return_one: float  # m{R = 1} = 1 - x_alpha(omega_0)


def return_tail(xs: XnSequence) -> ReturnTail:
    return ReturnTail(xs.indices.copy(), xs.values.copy(), 1.0 - xs.word.arrays(xs.family, 0, 1)[1][0])


def partial_sum(word: OmegaWord, family: str, N: int) -> float:
    """sum_{n=1}^{N} m{R > n} = sum X_n, computed exactly (O(N^2) inversions)."""
    xs = x_sequence(word, family, N, "all")
    return math.fsum(xs.values[1:])


# ---------------------------------------------------------------------------
# Comparison sequences Z_n <= X_n(omega) <= Z'_n

def coefficient_range(family: str, window: ParameterWindow, grid_size: int = 4097):
    """(min, max) of c_alpha and (min, max) of x_alpha over the window."""
    a = window.grid(grid_size)
    xa = np.asarray(branch_point(family, a, window), dtype=float)
    c = neutral_coefficient(a, xa)
    return (float(c.min()), float(c.max())), (float(xa.min()), float(xa.max()))


@numba.njit(cache=True)
def _comparison_chain(start, a, c, N):
    out = np.empty(N + 1)
    out[0] = 1.0
    out[1] = start
    for n in range(2, N + 1):
        out[n] = _kernels.invert_left(out[n - 1], a, 1.0, c)
    return out


@dataclass
class ComparisonSequences:
    lower: np.ndarray  # Z_n, index n (Z_0 := 1)
    upper: np.ndarray  # Z'_n
    c_max: float
    c_min: float
    window: ParameterWindow

    def two_sided_constant(self, n_min: int = 1) -> float:
        """Smallest C_0 with 1/(C_0 n^{1/a0}) <= Z_n and Z'_n <= C_0 n^{-1/a1}."""
        n = np.arange(n_min, len(self.lower))
        w = self.window
        lo = 1.0 / (self.lower[n] * n ** (1.0 / w.alpha0))
        hi = self.upper[n] * n ** (1.0 / w.alpha1)
        return float(max(lo.max(), hi.max()))


def comparison_sequences(family: str, window: ParameterWindow, N: int) -> ComparisonSequences:
    """Z_n = G^{-1}(Z_{n-1}) with G(x) = x(1 + C_1 x^{a0}), and Z'_n likewise
    with G'(x) = x(1 + C_1' x^{a1}); C_1, C_1' are max and min of c_alpha.

    The neutral form holds on the whole left branch for the built-in
    families, so the sequences start at n_0 = 1 from min/max x_alpha.
    """
    (c_min, c_max), (xa_min, xa_max) = coefficient_range(family, window)
    lower = _comparison_chain(xa_min, window.alpha0, c_max, N)
    upper = _comparison_chain(xa_max, window.alpha1, c_min, N)
    return ComparisonSequences(lower, upper, c_max, c_min, window)


# ---------------------------------------------------------------------------
# Power-law fits

@dataclass
class TailFit:
    slope: float
    intercept: float
    r2: float
    log_correction_exponent: float
    fit_range: tuple
    n_points: int
    excluded: list = field(default_factory=list)

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "log_correction_exponent": self.log_correction_exponent,
                "fit_range": list(self.fit_range), "n_points": self.n_points,
                "excluded": list(self.excluded)}


DecayFit = TailFit


def fit_tail(n, values, fit_range, log_correction_exponent: float = 0.0,
             min_points: int = 10) -> TailFit:
    """Least squares of log v - kappa log log n against log n on fit_range."""
    n = np.asarray(n, dtype=float)
    v = np.asarray(values, dtype=float)
    lo, hi = fit_range
    sel = (n >= lo) & (n <= hi)
    if sel.sum() < min_points:
        raise DomainError(f"need {min_points} points in {fit_range}, have {int(sel.sum())}")
    if np.any(v[sel] <= 0):
        raise DomainError("non-positive values in fit range")
    if log_correction_exponent and np.any(n[sel] <= 1):
        raise DomainError("log correction needs n > 1")
    x = np.log(n[sel])
    y = np.log(v[sel])
    if log_correction_exponent:
        y = y - log_correction_exponent * np.log(x)
    res = stats.linregress(x, y)
    r2 = min(1.0, max(0.0, res.rvalue ** 2))
    return TailFit(float(res.slope), float(res.intercept), float(r2),
                   float(log_correction_exponent), (lo, hi), int(sel.sum()))
