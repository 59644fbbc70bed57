"""Compiled inner loops.

Every map in the package has a left branch ``x + c x**(1+a)`` on ``[0, xa)``
and an affine right branch ``(x - xa) / (1 - xa)`` on ``[xa, 1]``, so the
kernels only take the triple ``(a, xa, c)``.
"""

import math

import numba
import numpy as np


@numba.njit(cache=True)
def invert_left(y, a, xa, c):
    # f(x) = x + c x^(1+a) - y is increasing and convex on [0, xa]; Newton
    # started from the upper end of the bracket decreases monotonically onto
    # the root, so we stop as soon as an iterate fails to decrease.
    if y <= 0.0:
        return 0.0
    x = y if y < xa else xa
    for _ in range(200):
        xa_pow = x ** a
        f = x + c * x * xa_pow - y
        if f <= 0.0:
            return x
        x_new = x - f / (1.0 + c * (1.0 + a) * xa_pow)
        if not x_new < x:
            return x
        x = x_new
    return x


@numba.njit(cache=True)
def eval_map(x, a, xa, c):
    if x < xa:
        return x + c * x ** (1.0 + a)
    return (x - xa) / (1.0 - xa)


@numba.njit(cache=True)
def log_deriv(x, a, xa, c):
    if x < xa:
        return math.log1p(c * (1.0 + a) * x ** a)
    return -math.log1p(-xa)


@numba.njit(cache=True)
def x_chain(alphas, xas, cs, ns):
    """X_n for every n in ``ns`` (sorted ascending, all >= 1).

    X_n = L_0 o L_1 o ... o L_{n-2} (xa_{n-1}) where L_j inverts the left
    branch of the j-th map.  The chains share no prefix, but at a fixed word
    index j every chain with n - 1 > j applies the same inverse, so one
    backward sweep over j evaluates all of them.
    """
    m = ns.shape[0]
    out = np.empty(m)
    if m == 0:
        return out
    first = m  # chains first..m-1 are active
    j = ns[m - 1] - 1
    while j >= 0:
        while first > 0 and ns[first - 1] - 1 == j:
            first -= 1
            out[first] = xas[j]
            # equal n values start together
        a = alphas[j]
        xa = xas[j]
        c = cs[j]
        for i in range(first, m):
            if ns[i] - 1 > j:
                out[i] = invert_left(out[i], a, xa, c)
        j -= 1
    return out


@numba.njit(cache=True)
def orbit_log_deriv(x, alphas, xas, cs):
    """Iterate x along the word, returning (T^n x, sum of log T'(x_k))."""
    s = 0.0
    for k in range(alphas.shape[0]):
        s += log_deriv(x, alphas[k], xas[k], cs[k])
        x = eval_map(x, alphas[k], xas[k], cs[k])
    return x, s


@numba.njit(cache=True)
def orbit_path(x, alphas, xas, cs):
    n = alphas.shape[0]
    path = np.empty(n + 1)
    path[0] = x
    s = 0.0
    for k in range(n):
        s += log_deriv(x, alphas[k], xas[k], cs[k])
        x = eval_map(x, alphas[k], xas[k], cs[k])
        path[k + 1] = x
    return path, s


@numba.njit(cache=True)
def pair_orbits(xs, ys, alphas, xas, cs):
    """Images and log-derivatives of T^n for many pairs (n = len(alphas))."""
    m = xs.shape[0]
    tx = np.empty(m)
    ty = np.empty(m)
    lx = np.empty(m)
    ly = np.empty(m)
    for i in range(m):
        tx[i], lx[i] = orbit_log_deriv(xs[i], alphas, xas, cs)
        ty[i], ly[i] = orbit_log_deriv(ys[i], alphas, xas, cs)
    return tx, ty, lx, ly


@numba.njit(cache=True)
def induced_step(x, pos, alphas, xas, cs):
    """Apply T^R from word position ``pos``; returns (image, R) or (x, -1)
    when the stored coordinates run out.

    R is one plus the number of left-branch steps before the orbit enters
    the right branch, which is the same as x lying in I_R.
    """
    k = pos
    n = alphas.shape[0]
    while k < n:
        if x >= xas[k]:
            return (x - xas[k]) / (1.0 - xas[k]), k - pos + 1
        x = x + cs[k] * x ** (1.0 + alphas[k])
        k += 1
    return x, -1


@numba.njit(cache=True)
def separation(x, y, alphas, xas, cs, horizon):
    """(s, censored): induced steps until x and y fall in distinct elements."""
    pos = 0
    for s in range(horizon):
        if x == y:
            return horizon, True
        fx, rx = induced_step(x, pos, alphas, xas, cs)
        fy, ry = induced_step(y, pos, alphas, xas, cs)
        if rx < 0 or ry < 0:
            return s, True
        if rx != ry:
            return s, False
        x = fx
        y = fy
        pos += rx
    return horizon, True


@numba.njit(cache=True)
def separation_many(xs, ys, alphas, xas, cs, horizon):
    m = xs.shape[0]
    s = np.empty(m, dtype=np.int64)
    cens = np.empty(m, dtype=np.bool_)
    for i in range(m):
        s[i], cens[i] = separation(xs[i], ys[i], alphas, xas, cs, horizon)
    return s, cens
