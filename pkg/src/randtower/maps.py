"""Parametrized families of intermittent maps with a neutral fixed point at 0.

Both built-in families share the shape

    T(x) = x + c * x**(1 + alpha)           on [0, x_alpha)
    T(x) = (x - x_alpha) / (1 - x_alpha)    on [x_alpha, 1]

with ``c = (1 - x_alpha) / x_alpha**(1 + alpha)`` so that the left branch is
onto [0, 1).  ``ClassicLSV`` fixes ``x_alpha = 1/2`` (giving ``c = 2**alpha``
and the right branch ``2x - 1``); ``MovingBoundary`` moves the branch point
with alpha, so the maps share no Markov partition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import _kernels
from .errors import DomainError

CLASSIC = "ClassicLSV"
MOVING = "MovingBoundary"
FAMILIES = (CLASSIC, MOVING)


@dataclass(frozen=True)
class ParameterWindow:
    alpha0: float
    alpha1: float

    def __post_init__(self):
        if not (0.0 < self.alpha0 < self.alpha1 < 1.0):
            raise DomainError(
                f"need 0 < alpha0 < alpha1 < 1, got [{self.alpha0}, {self.alpha1}]")

    @property
    def width(self) -> float:
        return self.alpha1 - self.alpha0

    def grid(self, size: int) -> np.ndarray:
        return np.linspace(self.alpha0, self.alpha1, size)


def branch_point(family: str, alpha, window: ParameterWindow):
    """x_alpha for a built-in family (vectorized over alpha)."""
    alpha = np.asarray(alpha, dtype=float)
    if family == CLASSIC:
        out = np.full_like(alpha, 0.5)
    elif family == MOVING:
        out = 0.5 + 0.2 * (alpha - window.alpha0) / window.width
    else:
        raise DomainError(f"unknown family {family!r}")
    return out if out.ndim else float(out)


def neutral_coefficient(alpha, x_alpha):
    """c_alpha making the left branch onto [0, 1)."""
    return (1.0 - x_alpha) / x_alpha ** (1.0 + alpha)


@dataclass(frozen=True)
class MapDescriptor:
    """One member T_alpha of a family.

    Methods accept scalars or arrays; array input is evaluated elementwise.
    """

    family: str
    alpha: float
    x_alpha: float
    c_alpha: float

    def __post_init__(self):
        if not (0.0 < self.x_alpha < 1.0):
            raise DomainError(f"branch point {self.x_alpha} not in (0, 1)")
        if not self.c_alpha > 0.0:
            raise DomainError("neutral coefficient must be positive")

    # -- branches -----------------------------------------------------------
    def left(self, x):
        return x + self.c_alpha * x ** (1.0 + self.alpha)

    def right(self, x):
        return (x - self.x_alpha) / (1.0 - self.x_alpha)

    def left_deriv(self, x, order):
        a, c = self.alpha, self.c_alpha
        if order == 1:
            return 1.0 + c * (1.0 + a) * x ** a
        if order == 2:
            return c * (1.0 + a) * a * x ** (a - 1.0)
        return c * (1.0 + a) * a * (a - 1.0) * x ** (a - 2.0)

    def right_deriv(self, x, order):
        slope = 1.0 / (1.0 - self.x_alpha)
        return np.where(np.asarray(x) == x, slope if order == 1 else 0.0, np.nan)

    # -- public operations --------------------------------------------------
    def eval(self, x):
        x = _check_unit(x)
        out = np.where(x < self.x_alpha, self.left(x), self.right(x))
        return _unwrap(out)

    __call__ = eval

    def deriv(self, x, order=1, branch=None):
        """Closed-form derivative of order 1, 2 or 3.

        ``branch`` ('left' or 'right') is required at ``x == x_alpha``;
        elsewhere it defaults to the branch containing x.  Orders 2 and 3
        diverge at 0 on the left branch and raise there.
        """
        if order not in (1, 2, 3):
            raise DomainError(f"order must be 1, 2 or 3, got {order}")
        x = _check_unit(x)
        if branch is None:
            if np.any(x == self.x_alpha):
                raise DomainError("x is the branch point; pass branch='left' or 'right'")
            on_left = x < self.x_alpha
        elif branch == "left":
            if np.any(x > self.x_alpha):
                raise DomainError("x outside the closure of the left branch")
            on_left = np.ones_like(x, dtype=bool)
        elif branch == "right":
            if np.any(x < self.x_alpha):
                raise DomainError("x outside the right branch")
            on_left = np.zeros_like(x, dtype=bool)
        else:
            raise DomainError(f"unknown branch {branch!r}")
        if order >= 2 and np.any(on_left & (x == 0.0)):
            raise DomainError(f"derivative of order {order} diverges at 0")
        with np.errstate(divide="ignore", invalid="ignore"):
            left = self.left_deriv(np.where(on_left, x, 0.5 * self.x_alpha), order)
            right = self.right_deriv(x, order)
        return _unwrap(np.where(on_left, left, right))

    def schwarzian(self, x):
        x = _check_unit(x)
        if np.any(x <= 0.0) or np.any(x > self.x_alpha):
            raise DomainError("Schwarzian is taken on (0, x_alpha] only")
        return schwarzian(self, x)

    def invert_left(self, y):
        """Preimage of y in [0, x_alpha) under the left branch.

        Full double precision, including relative precision for tiny y.
        Array input is returned monotone in y.
        """
        y = np.asarray(y, dtype=float)
        if np.any(~np.isfinite(y)) or np.any(y < 0.0) or np.any(y > 1.0):
            raise DomainError("invert_left needs y in [0, 1)")
        if y.ndim == 0:
            return _kernels.invert_left(float(y), self.alpha, self.x_alpha, self.c_alpha)
        return invert_left_many(y, self.alpha, self.x_alpha, self.c_alpha)

    def invert_right(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y < 0.0) or np.any(y > 1.0):
            raise DomainError("invert_right needs y in [0, 1]")
        return _unwrap(self.x_alpha + y * (1.0 - self.x_alpha))

    @property
    def kernel_args(self):
        return self.alpha, self.x_alpha, self.c_alpha


def make_map(family: str, alpha: float, window: ParameterWindow) -> MapDescriptor:
    if family in FIXTURES:
        return FIXTURES[family](alpha, window)
    if not (window.alpha0 <= alpha <= window.alpha1):
        raise DomainError(f"alpha={alpha} outside [{window.alpha0}, {window.alpha1}]")
    xa = branch_point(family, alpha, window)
    return MapDescriptor(family, float(alpha), xa, neutral_coefficient(alpha, xa))


def family_arrays(family: str, alphas, window: ParameterWindow):
    """(alpha, x_alpha, c_alpha) arrays for the compiled kernels."""
    if family not in FAMILIES:
        raise DomainError(f"family {family!r} has no compiled kernel")
    alphas = np.ascontiguousarray(alphas, dtype=float)
    xas = np.asarray(branch_point(family, alphas, window), dtype=float)
    return alphas, xas, neutral_coefficient(alphas, xas)


def schwarzian(g, x):
    """S g = g'''/g' - 3/2 (g''/g')^2 for any object with ``deriv``."""
    d1 = g.deriv(x, 1)
    d2 = g.deriv(x, 2)
    d3 = g.deriv(x, 3)
    return d3 / d1 - 1.5 * (d2 / d1) ** 2


@numba.njit(cache=True)
def invert_left_many(y, a, xa, c):
    out = np.empty_like(y)
    flat_y = y.ravel()
    flat = out.ravel()
    for i in range(flat_y.shape[0]):
        flat[i] = _kernels.invert_left(flat_y[i], a, xa, c)
    return out


def _check_unit(x):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError("x must be a finite number in [0, 1]")
    return x


def _unwrap(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


# ---------------------------------------------------------------------------
# Negative-control fixtures.  They violate one premise each on purpose and are
# selectable by name wherever a family name is accepted.

@dataclass(frozen=True)
class BrokenSlopeMap(MapDescriptor):
    """Left branch 0.5 x + c x^(1+alpha): slope 1/2 at 0, so (A2) fails."""

    def left(self, x):
        return 0.5 * x + self.c_alpha * x ** (1.0 + self.alpha)

    def left_deriv(self, x, order):
        base = super().left_deriv(x, order)
        return base - 0.5 if order == 1 else base

    def invert_left(self, y):
        y = np.asarray(y, dtype=float)
        from scipy.optimize import brentq
        f = np.vectorize(lambda v: 0.0 if v == 0.0 else brentq(
            lambda s: self.left(s) - v, 0.0, self.x_alpha, xtol=1e-15))
        return _unwrap(f(y))

    @property
    def kernel_args(self):
        raise DomainError("fixture maps have no compiled kernel")


@dataclass(frozen=True)
class UnitSlopeMap(MapDescriptor):
    """Right branch reported with slope 1, so no expansion constant exists."""

    def right_deriv(self, x, order):
        return np.where(np.asarray(x) == x, 1.0 if order == 1 else 0.0, np.nan)

    @property
    def kernel_args(self):
        raise DomainError("fixture maps have no compiled kernel")


def _broken_slope(alpha, window):
    xa = 0.5
    return BrokenSlopeMap("BrokenSlope", float(alpha), xa,
                          (1.0 - 0.5 * xa) / xa ** (1.0 + alpha))


def _unit_slope(alpha, window):
    return UnitSlopeMap("UnitSlope", float(alpha), 0.5, 2.0 ** alpha)


FIXTURES = {"BrokenSlope": _broken_slope, "UnitSlope": _unit_slope}


# ---------------------------------------------------------------------------
# Axiom checker

@dataclass
class AxiomResult:
    passed: bool
    margin: float
    detail: str = ""


@dataclass
class ValidationReport:
    family: str
    window: ParameterWindow
    grid_size: int
    axioms: dict = field(default_factory=dict)
    x_alpha_range: tuple = (math.nan, math.nan)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.axioms.values())

    def failures(self):
        return [k for k, r in self.axioms.items() if not r.passed]

    def to_dict(self):
        return {
            "family": self.family,
            "window": [self.window.alpha0, self.window.alpha1],
            "grid_size": self.grid_size,
            "passed": self.passed,
            "x_alpha_range": list(self.x_alpha_range),
            "axioms": {k: {"passed": bool(r.passed), "margin": float(r.margin),
                           "detail": r.detail} for k, r in self.axioms.items()},
        }


def validate_axioms(family: str, window: ParameterWindow, grid_size: int = 500,
                    expansion_floor: float = 1e-3) -> ValidationReport:
    """Check (A1)-(A5) on a grid_size x grid_size grid of (x, alpha).

    Continuity in (A5) is checked per branch: the map jumps at x_alpha.
    Expansion (A2) is checked for x >= ``expansion_floor``; at 0 the
    derivative equals 1 by design.
    """
    if grid_size < 100:
        raise DomainError("grid_size must be at least 100")
    alphas = window.grid(grid_size)
    maps = [make_map(family, a, window) for a in alphas]
    u = np.linspace(0.0, 1.0, grid_size + 1)[:-1]  # [0, 1)
    report = ValidationReport(family, window, grid_size)

    # (A1) full increasing branches
    worst_step, worst_end = np.inf, 0.0
    xas = np.array([m.x_alpha for m in maps])
    for m in maps:
        xl = m.x_alpha * u
        xr = m.x_alpha + (1.0 - m.x_alpha) * np.append(u, 1.0)
        tl, tr = m.left(xl), m.right(xr)
        worst_step = min(worst_step, np.diff(tl).min(), np.diff(tr).min())
        ends = [tl[0], m.left(m.x_alpha) - 1.0, tr[0], tr[-1] - 1.0]
        worst_end = max(worst_end, max(abs(e) for e in ends))
    a1_ok = bool(worst_step > 0 and worst_end <= 1e-12 and xas.min() > 0 and xas.max() < 1)
    report.axioms["A1"] = AxiomResult(
        a1_ok, float(worst_step),
        f"min branch increment {worst_step:.3e}, worst endpoint error {worst_end:.3e}")
    report.x_alpha_range = (float(xas.min()), float(xas.max()))

    # (A2) expansion away from 0
    margin = np.inf
    for m in maps:
        xl = np.linspace(expansion_floor, m.x_alpha, grid_size)
        xr = np.linspace(m.x_alpha, 1.0, grid_size)
        d = np.concatenate([m.deriv(xl, 1, branch="left"), m.deriv(xr, 1, branch="right")])
        margin = min(margin, d.min() - 1.0)
    report.axioms["A2"] = AxiomResult(bool(margin > 0), float(margin),
                                      f"min T' - 1 for x >= {expansion_floor:g}")

    # (A3) neutral form x + c x^(1+a) (1 + f(x)) with f -> 0 and T'(0) = 1
    xs = np.geomspace(1e-12, 1e-2, grid_size)
    worst_f, worst_slope = 0.0, 0.0
    for m in maps:
        f = (m.left(xs) - xs) / (m.c_alpha * xs ** (1.0 + m.alpha)) - 1.0
        worst_f = max(worst_f, abs(f[0]))
        worst_slope = max(worst_slope, abs(m.deriv(0.0, 1) - 1.0))
    a3_ok = worst_f <= 1e-6 and worst_slope <= 1e-12
    report.axioms["A3"] = AxiomResult(
        bool(a3_ok), float(max(worst_f, worst_slope)),
        f"|f_alpha| near 0 <= {worst_f:.3e}, |T'(0) - 1| = {worst_slope:.3e}")

    # (A4) negative Schwarzian on (0, x_alpha]
    worst_s = -np.inf
    for m in maps:
        xl = m.x_alpha * np.linspace(1.0 / grid_size, 1.0, grid_size)
        worst_s = max(worst_s, np.max(schwarzian(_LeftBranch(m), xl)))
    report.axioms["A4"] = AxiomResult(bool(worst_s < 0), float(-worst_s),
                                      f"max Schwarzian {worst_s:.3e}")

    # (A5) per-branch continuity of T', T'' in (x, alpha), and C^1 x_alpha
    a5_ok, jumps = True, []
    probe = np.linspace(expansion_floor, 1.0, grid_size) * xas.min()
    probe_r = np.linspace(xas.max(), 1.0, grid_size)
    for order in (1, 2):
        for coarse in (False, True):
            step = 2 if coarse else 1
            sub = maps[::step]
            dl = np.array([m.deriv(probe, order, branch="left") for m in sub])
            dr = np.array([m.deriv(probe_r, order, branch="right") for m in sub])
            jumps.append(max(np.abs(np.diff(dl, axis=0)).max(),
                             np.abs(np.diff(dr, axis=0)).max()))
    # halving the alpha spacing must (roughly) halve the largest jump
    for fine, coarse in ((jumps[0], jumps[1]), (jumps[2], jumps[3])):
        if coarse > 0 and fine > 0.6 * coarse + 1e-12:
            a5_ok = False
    dx = np.gradient(xas, alphas)
    ddx = np.abs(np.diff(dx)).max() if len(dx) > 1 else 0.0
    if ddx > 1e-6 * max(1.0, np.abs(dx).max()) * grid_size:
        a5_ok = False
    report.axioms["A5"] = AxiomResult(
        a5_ok, float(max(jumps[0], jumps[2])),
        f"max alpha-jump of T' {jumps[0]:.3e}, of T'' {jumps[2]:.3e}; "
        f"x_alpha derivative variation {ddx:.3e}")
    return report


class _LeftBranch:
    """Left branch of a map as a standalone diffeomorphism."""

    def __init__(self, m):
        self.m = m

    def deriv(self, x, order):
        return self.m.left_deriv(np.asarray(x, dtype=float), order)
