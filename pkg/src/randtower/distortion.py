"""Distortion of T^n_omega on I_n(omega) and of the induced map.

All derivative products are accumulated as sums of logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError
from .inducing import x_sequence
from .words import OmegaWord, shift


@dataclass
class OrbitDerivative:
    word: OmegaWord
    start: float
    length: int
    log_deriv: float
    orbit: np.ndarray

    @property
    def image(self) -> float:
        return float(self.orbit[-1])


def orbit_derivative(word: OmegaWord, family: str, x: float, n: int) -> OrbitDerivative:
    """Iterate x through T_{omega_0}, ..., T_{omega_{n-1}}."""
    if not (0.0 < x <= 1.0):
        raise DomainError("orbit start must lie in (0, 1]")
    if n < 0:
        raise DomainError("n must be non-negative")
    a, xa, c = word.arrays(family, 0, n)
    path, s = _kernels.orbit_path(float(x), a, xa, c)
    return OrbitDerivative(word, float(x), n, float(s), path)


@dataclass
class DistortionSample:
    value: float  # the distortion measure (left side of the inequality)
    normalizer: float  # |T^n x - T^n y|

    @property
    def quotient(self) -> float:
        if self.value == 0.0:
            return 0.0
        return self.value / self.normalizer


def _check_in_interval(word, family, x, y, n, xseq):
    if n < 1:
        raise DomainError("n must be at least 1")
    if xseq is None:
        xseq = x_sequence(word, family, n, [n - 1, n])
    lo, hi = xseq.interval(n)
    for p in (x, y):
        if not lo < p <= hi:
            raise DomainError(f"{p} is not in I_{n} = ({lo}, {hi}]")


def distortion_ratio(word, family, x, y, n, xseq=None) -> DistortionSample:
    """|(T^n)'x / (T^n)'y - 1| and |T^n x - T^n y| for x, y in I_n(omega)."""
    _check_in_interval(word, family, x, y, n, xseq)
    ox, oy = orbit_derivative(word, family, x, n), orbit_derivative(word, family, y, n)
    return DistortionSample(abs(math.expm1(ox.log_deriv - oy.log_deriv)),
                            abs(ox.image - oy.image))


def induced_log_distortion(word, family, x, y, n, xseq=None) -> DistortionSample:
    """|log (T^R)'x - log (T^R)'y| with R = n on I_n(omega)."""
    _check_in_interval(word, family, x, y, n, xseq)
    ox, oy = orbit_derivative(word, family, x, n), orbit_derivative(word, family, y, n)
    return DistortionSample(abs(ox.log_deriv - oy.log_deriv), abs(ox.image - oy.image))


@dataclass
class SeparationTime:
    s: int
    censored: bool


def separation_time(word: OmegaWord, family: str, x: float, y: float,
                    horizon: int = 64) -> SeparationTime:
    """Number of induced steps before x and y land in distinct I_k.

    Returns ``horizon`` flagged as censored when the points never separate
    (e.g. x == y), and the steps completed so far, flagged, when the word
    runs out of stored coordinates.
    """
    for p in (x, y):
        if not 0.0 < p <= 1.0:
            raise DomainError("points must lie in (0, 1]")
    a, xa, c = word.arrays(family, 0, word.future_len)
    s, cens = _kernels.separation(float(x), float(y), a, xa, c, horizon)
    return SeparationTime(int(s), bool(cens))


def return_time(word: OmegaWord, family: str, x: float) -> int:
    """R_omega(x), found by iterating until the orbit enters a right branch."""
    a, xa, c = word.arrays(family, 0, word.future_len)
    _, r = _kernels.induced_step(float(x), 0, a, xa, c)
    if r < 0:
        raise DomainError("word too short to resolve the return time")
    return int(r)


# ---------------------------------------------------------------------------
# Batched sampling used by the experiments

@dataclass
class PairBatch:
    n: int
    x: np.ndarray
    y: np.ndarray
    image_x: np.ndarray
    image_y: np.ndarray
    log_deriv_x: np.ndarray
    log_deriv_y: np.ndarray

    @property
    def ratio_minus_one(self):
        return np.abs(np.expm1(self.log_deriv_x - self.log_deriv_y))

    @property
    def log_gap(self):
        return np.abs(self.log_deriv_x - self.log_deriv_y)

    @property
    def image_gap(self):
        return np.abs(self.image_x - self.image_y)

    def k_samples(self):
        return _safe_quotient(self.ratio_minus_one, self.image_gap)

    def c_samples(self):
        return _safe_quotient(self.log_gap, self.image_gap)


def _safe_quotient(num, den):
    out = np.zeros_like(num)
    nz = num > 0
    out[nz] = num[nz] / den[nz]
    return out


def sample_pairs(word: OmegaWord, family: str, n: int, n_pairs: int, rng,
                 shrink: float = 0.01) -> PairBatch:
    """Pairs in I_n(omega): the shrunk endpoints, uniform pairs, and close
    pairs at log-uniform relative distance in [1e-8, 1e-1]."""
    xseq = x_sequence(word, family, n, [n - 1, n])
    lo, hi = xseq.interval(n)
    length = hi - lo
    a_lo, a_hi = lo + shrink * length, hi - shrink * length
    n_uniform = (n_pairs - 1) // 2
    n_close = n_pairs - 1 - n_uniform
    u = a_lo + (a_hi - a_lo) * rng.random((n_uniform, 2))
    cx = a_lo + (a_hi - a_lo) * rng.random(n_close)
    gap = length * 10.0 ** rng.uniform(-8.0, -1.0, n_close)
    cy = np.clip(cx + gap, a_lo, a_hi)
    x = np.concatenate([[a_lo], u[:, 0], cx])
    y = np.concatenate([[a_hi], u[:, 1], cy])
    a, xa, c = word.arrays(family, 0, n)
    tx, ty, lx, ly = _kernels.pair_orbits(x, y, a, xa, c)
    return PairBatch(n, x, y, tx, ty, lx, ly)


def separation_of_images(word: OmegaWord, family: str, batch: PairBatch,
                         horizon: int = 64):
    """s(T^R x, T^R y) for every pair, using the word shifted by R = n."""
    w = shift(word, batch.n)
    a, xa, c = w.arrays(family, 0, w.future_len)
    return _kernels.separation_many(batch.image_x, batch.image_y, a, xa, c, horizon)
