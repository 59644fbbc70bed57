"""Quenched densities and correlations through Ulam's method.

The transfer operator of each map T_alpha is discretized on a mesh graded
towards the neutral fixed point, boundary_i = (i / G)^gamma.  Densities are
carried as cell masses (row vectors) and pushed forward by the row-stochastic
Ulam matrices of consecutive word coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import DomainError
from .inducing import DecayFit, fit_tail
from .maps import MapDescriptor, ParameterWindow, invert_left_many, make_map
from .words import OmegaWord


@dataclass(frozen=True)
class MeshSpec:
    cells: int = 4096
    grading: float = 2.0

    def __post_init__(self):
        if self.cells < 1 or self.grading < 1.0:
            raise DomainError("mesh needs cells >= 1 and grading >= 1")

    def boundaries(self) -> np.ndarray:
        b = (np.arange(self.cells + 1) / self.cells) ** self.grading
        b[-1] = 1.0
        return b

    def midpoints(self) -> np.ndarray:
        b = self.boundaries()
        return 0.5 * (b[1:] + b[:-1])


@dataclass(eq=False)
class UlamMatrix:
    mesh: np.ndarray
    matrix: sp.csr_matrix  # row i: where the mass of cell i goes
    alpha: float
    _pushT: sp.csr_matrix = field(default=None, repr=False)

    def push(self, v):
        """Push cell masses (vector or columns of a matrix) forward one step."""
        if self._pushT is None:
            self._pushT = self.matrix.T.tocsr()
        return self._pushT @ v


def transition_matrix(mesh, left_pre, right_pre, x_alpha) -> sp.csr_matrix:
    """Entry (i, j) = m(cell_i cap T^{-1} cell_j) / m(cell_i).

    ``left_pre`` and ``right_pre`` are the preimages of every mesh boundary
    under the two inverse branches; together with the mesh they cut [0, 1]
    into pieces each lying in one cell and mapping into one cell.
    """
    mesh = np.asarray(mesh, dtype=float)
    G = len(mesh) - 1
    pts = np.unique(np.concatenate([mesh, left_pre, right_pre]))
    lo, hi = pts[:-1], pts[1:]
    length = hi - lo
    keep = length > 0
    lo, hi, length = lo[keep], hi[keep], length[keep]
    mid = 0.5 * (lo + hi)
    i = np.searchsorted(mesh, mid, side="right") - 1
    j = np.where(mid < x_alpha,
                 np.searchsorted(left_pre, mid, side="right") - 1,
                 np.searchsorted(right_pre, mid, side="right") - 1)
    j = np.clip(j, 0, G - 1)
    width = np.diff(mesh)
    return sp.csr_matrix((length / width[i], (i, j)), shape=(G, G))


def _preimages(m, mesh):
    try:
        a, xa, c = m.kernel_args
        left = invert_left_many(mesh, a, xa, c)
    except DomainError:
        left = np.asarray(m.invert_left(np.minimum(mesh, np.nextafter(1.0, 0.0))))
    left = np.maximum.accumulate(left)
    left[0], left[-1] = 0.0, m.x_alpha
    right = m.x_alpha + mesh * (1.0 - m.x_alpha)
    right[0], right[-1] = m.x_alpha, 1.0
    return left, right


def build_ulam(m: MapDescriptor, mesh_spec: MeshSpec = MeshSpec(), min_cells: int = 64) -> UlamMatrix:
    if mesh_spec.cells < min_cells:
        raise DomainError(f"mesh has {mesh_spec.cells} cells; need >= {min_cells}")
    mesh = mesh_spec.boundaries()
    left, right = _preimages(m, mesh)
    return UlamMatrix(mesh, transition_matrix(mesh, left, right, m.x_alpha), m.alpha)


# ---------------------------------------------------------------------------
# Densities

@dataclass
class DensityVector:
    masses: np.ndarray
    mesh: np.ndarray
    seed: int
    burn_in: int

    def density(self):
        return self.masses / np.diff(self.mesh)


def _maps_for(word, family, start, stop):
    return [make_map(family, a, word.window) for a in word.coords(start, stop)]


def quenched_density(word: OmegaWord, family: str, mesh_spec: MeshSpec = MeshSpec()) -> DensityVector:
    """Lebesgue pushed forward along omega_{-B}, ..., omega_{-1}, B = past_len."""
    mesh = mesh_spec.boundaries()
    v = np.diff(mesh)
    for m in _maps_for(word, family, -word.past_len, 0):
        v = build_ulam(m, mesh_spec).push(v)
    return DensityVector(v, mesh, word.seed, word.past_len)


def _past_densities(word, family, mesh_spec, positions):
    """mu at sigma^p omega for each p in positions (p <= 0), in one sweep."""
    mesh = mesh_spec.boundaries()
    v = np.diff(mesh)
    want = set(positions)
    out = {}
    start = -word.past_len
    for p, m in zip(range(start, 0), _maps_for(word, family, start, 0)):
        if p in want:
            out[p] = v
        v = build_ulam(m, mesh_spec).push(v)
    if 0 in want:
        out[0] = v
    return out


# ---------------------------------------------------------------------------
# Observables

def _smoothed_step(x, width=1.0 / 64.0):
    # indicator of [1/2, 1] convolved with a uniform kernel of the given width,
    # then smoothstepped so the transition is C^1
    s = np.clip((np.asarray(x) - 0.5) / width + 0.5, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


OBSERVABLES = {
    "x": lambda x: np.asarray(x, dtype=float),
    "sin": lambda x: np.sin(np.pi * np.asarray(x, dtype=float)),
    "step": _smoothed_step,
    "const": lambda x: np.ones_like(np.asarray(x, dtype=float)),
}


def observable(name):
    if callable(name):
        return name
    try:
        return OBSERVABLES[name]
    except KeyError:
        raise DomainError(f"unknown observable {name!r}; choose from {sorted(OBSERVABLES)}")


@dataclass
class CorrelationCurve:
    lags: np.ndarray
    values: np.ndarray  # signed; Cor is |values|
    std_errors: np.ndarray  # zero for the Ulam estimator
    observables: tuple
    estimator: str
    direction: str = "future"


# ---------------------------------------------------------------------------
# Correlations

def _check_lags(lags):
    lags = np.asarray(lags, dtype=np.int64)
    if lags.ndim != 1 or len(lags) == 0 or np.any(lags < 1) or np.any(np.diff(lags) <= 0):
        raise DomainError("lags must be a strictly increasing list of positive integers")
    return lags


def _ulam_future(word, family, mesh_spec, phi_c, psi_c, lags):
    v0 = quenched_density(word, family, mesh_spec).masses
    W = np.stack([psi_c * v0, v0], axis=1)
    psi_mean = psi_c @ v0
    out = np.empty(len(lags))
    want = {int(n): i for i, n in enumerate(lags)}
    for k, m in enumerate(_maps_for(word, family, 0, int(lags[-1]))):
        W = build_ulam(m, mesh_spec).push(W)
        i = want.get(k + 1)
        if i is not None:
            out[i] = phi_c @ W[:, 0] - (phi_c @ W[:, 1]) * psi_mean
    return out


def _ulam_past(word, family, mesh_spec, phi_c, psi_c, lags):
    # sweep from the start of the word to omega_0, opening one column per lag
    n_max = int(lags[-1])
    if word.past_len < n_max:
        raise DomainError("past correlations need past_len >= largest lag")
    mesh = mesh_spec.boundaries()
    v = np.diff(mesh)
    start = -word.past_len
    cols = np.zeros((len(v), len(lags)))
    psi_means = np.zeros(len(lags))
    opened = np.zeros(len(lags), dtype=bool)
    col_of = {-int(n): i for i, n in enumerate(lags)}
    for p, m in zip(range(start, 0), _maps_for(word, family, start, 0)):
        i = col_of.get(p)
        if i is not None:
            cols[:, i] = psi_c * v
            psi_means[i] = psi_c @ v
            opened[i] = True
        U = build_ulam(m, mesh_spec)
        v = U.push(v)
        if opened.any():
            cols[:, opened] = U.push(cols[:, opened])
    return phi_c @ cols - (phi_c @ v) * psi_means


@numba.njit(cache=True)
def _step_all(x, a, xa, c):
    for i in range(x.shape[0]):
        x[i] = _kernels.eval_map(x[i], a, xa, c)


def _sample_from(masses, mesh, n, rng):
    cdf = np.cumsum(masses)
    cdf /= cdf[-1]
    cell = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), len(masses) - 1)
    return mesh[cell] + rng.random(n) * (mesh[cell + 1] - mesh[cell])


def _mc_run(x, coeffs, phi, psi, lags, start):
    """Centered product statistics of phi(T^n x) psi(x) at the given lags."""
    a, xa, c = coeffs
    g = psi(x)
    g = g - g.mean()
    vals, ses = [], []
    want = set(int(n) for n in lags)
    for k in range(int(max(lags))):
        _step_all(x, a[start + k], xa[start + k], c[start + k])
        if k + 1 in want:
            f = phi(x)
            prod = (f - f.mean()) * g
            vals.append(prod.mean())
            ses.append(prod.std(ddof=1) / math.sqrt(len(x)))
    return vals, ses


def quenched_correlation(word: OmegaWord, family: str, phi, psi, lags,
                         estimator: str = "ulam", mesh_spec: MeshSpec = MeshSpec(),
                         n_samples: int = 10 ** 6, seed: int = 0,
                         direction: str = "future") -> CorrelationCurve:
    """Future or past correlation of (phi, psi) along the word.

    Future: int phi o T^n_omega psi dmu_omega - int phi dmu_{sigma^n omega} int psi dmu_omega.
    Past: the same with omega replaced by sigma^{-n} omega and phi paired at omega.
    mu is the pushforward of Lebesgue along all stored past coordinates.
    """
    lags = _check_lags(lags)
    phi_f, psi_f = observable(phi), observable(psi)
    names = (phi if isinstance(phi, str) else "custom", psi if isinstance(psi, str) else "custom")
    if direction == "future" and word.future_len < lags[-1]:
        raise DomainError(f"lag {lags[-1]} exceeds the {word.future_len} stored future coordinates")
    if direction not in ("future", "past"):
        raise DomainError(f"unknown direction {direction!r}")
    mid = mesh_spec.midpoints()
    if estimator == "ulam":
        fn = _ulam_future if direction == "future" else _ulam_past
        vals = fn(word, family, mesh_spec, phi_f(mid), psi_f(mid), lags)
        return CorrelationCurve(lags, np.asarray(vals), np.zeros(len(lags)), names, "ulam", direction)
    if estimator != "montecarlo":
        raise DomainError(f"unknown estimator {estimator!r}")
    rng = np.random.default_rng(seed)
    mesh = mesh_spec.boundaries()
    coeffs = word.arrays(family, -word.past_len, word.future_len)
    if direction == "future":
        v0 = quenched_density(word, family, mesh_spec).masses
        x = _sample_from(v0, mesh, n_samples, rng)
        vals, ses = _mc_run(x, coeffs, phi_f, psi_f, lags, word.past_len)
    else:
        if word.past_len < lags[-1]:
            raise DomainError("past correlations need past_len >= largest lag")
        vals, ses = [], []
        dens = _past_densities(word, family, mesh_spec, [-int(n) for n in lags])
        for n in lags:
            x = _sample_from(dens[-int(n)], mesh, n_samples, rng)
            val, se = _mc_run(x, coeffs, phi_f, psi_f, [int(n)], word.past_len - int(n))
            vals.append(val[0])
            ses.append(se[0])
    return CorrelationCurve(lags, np.array(vals), np.array(ses), names, "montecarlo", direction)


def fit_decay(curve: CorrelationCurve, fit_range, min_points: int = 8) -> DecayFit:
    """Log-log slope of |Cor| over fit_range; lags whose sign differs from the
    first lag in range (or that vanish) are excluded and listed."""
    lags, vals = curve.lags, curve.values
    sel = (lags >= fit_range[0]) & (lags <= fit_range[1])
    if not sel.any():
        raise DomainError("no lags in fit range")
    ref = np.sign(vals[sel][0])
    bad = sel & ((np.sign(vals) != ref) | (vals == 0))
    good = sel & ~bad
    if good.sum() < min_points:
        raise DomainError(f"need {min_points} usable lags, have {int(good.sum())}")
    fit = fit_tail(lags[good], np.abs(vals[good]), fit_range, 0.0, min_points=min_points)
    fit.excluded = [int(n) for n in lags[bad]]
    return fit


def decay_band(window: ParameterWindow, margin_low: float, margin_high: float):
    """Slopes admitted between the fastest rate 1 - 1/alpha0 and the slowest
    single-map rate 1 - 1/alpha1, widened by the margins."""
    return 1.0 - 1.0 / window.alpha0 - margin_low, 1.0 - 1.0 / window.alpha1 + margin_high
