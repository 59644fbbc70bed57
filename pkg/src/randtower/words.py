"""Finite two-sided parameter words and the shift.

A word stores the coordinates omega_{-past_len}, ..., omega_{future_len-1}
of an i.i.d. uniform sequence on [alpha0, alpha1].  Past and future are drawn
from independent child streams of the seed, so lengthening one side never
changes the coordinates already drawn.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError
from .maps import ParameterWindow, family_arrays


@dataclass(frozen=True, eq=False)
class OmegaWord:
    params: np.ndarray
    origin_index: int
    seed: int
    window: ParameterWindow

    def __post_init__(self):
        if not (0 <= self.origin_index <= len(self.params)):
            raise DomainError("origin_index outside the stored coordinates")

    def __eq__(self, other):
        return (isinstance(other, OmegaWord)
                and self.origin_index == other.origin_index
                and self.seed == other.seed and self.window == other.window
                and np.array_equal(self.params, other.params))

    @property
    def past_len(self) -> int:
        return self.origin_index

    @property
    def future_len(self) -> int:
        return len(self.params) - self.origin_index

    def alpha_at(self, j: int) -> float:
        i = self.origin_index + j
        if not 0 <= i < len(self.params):
            raise DomainError(f"coordinate {j} is not stored")
        return float(self.params[i])

    def coords(self, start: int, stop: int) -> np.ndarray:
        """alpha(omega_j) for start <= j < stop."""
        lo, hi = self.origin_index + start, self.origin_index + stop
        if lo < 0 or hi > len(self.params) or lo > hi:
            raise DomainError(f"coordinates [{start}, {stop}) are not stored "
                              f"(have [{-self.past_len}, {self.future_len}))")
        return self.params[lo:hi]

    def arrays(self, family: str, start: int, stop: int):
        """Kernel arrays (alpha, x_alpha, c_alpha) for coordinates [start, stop)."""
        return family_arrays(family, self.coords(start, stop), self.window)

    def to_json(self) -> str:
        return json.dumps({
            "params": [float(p) for p in self.params],
            "origin_index": self.origin_index,
            "seed": self.seed,
            "window": [self.window.alpha0, self.window.alpha1],
        })

    @classmethod
    def from_json(cls, text: str) -> "OmegaWord":
        d = json.loads(text)
        return cls(np.array(d["params"], dtype=float), int(d["origin_index"]),
                   int(d["seed"]), ParameterWindow(*d["window"]))


def draw_word(seed: int, window: ParameterWindow, past_len: int = 0,
              future_len: int = 1) -> OmegaWord:
    if past_len < 0 or future_len < 0 or past_len + future_len < 1:
        raise DomainError("need past_len, future_len >= 0 with positive total")
    future_ss, past_ss = np.random.SeedSequence(seed).spawn(2)
    lo, hi = window.alpha0, window.alpha1
    future = np.random.default_rng(future_ss).uniform(lo, hi, future_len)
    # past stream is drawn outward: omega_{-1}, omega_{-2}, ...
    past = np.random.default_rng(past_ss).uniform(lo, hi, past_len)[::-1]
    return OmegaWord(np.concatenate([past, future]), past_len, int(seed), window)


def constant_word(alpha: float, window: ParameterWindow, past_len: int = 0,
                  future_len: int = 1) -> OmegaWord:
    """Deterministic word omega_k = alpha for every k (seed recorded as 0)."""
    if not window.alpha0 <= alpha <= window.alpha1:
        raise DomainError("alpha outside the window")
    return OmegaWord(np.full(past_len + future_len, float(alpha)), past_len, 0, window)


def shift(word: OmegaWord, k: int = 1) -> OmegaWord:
    """sigma^k: alpha_at(shift(w, k), j) == alpha_at(w, j + k)."""
    new = word.origin_index + k
    if not 0 <= new <= len(word.params):
        raise DomainError(f"shift by {k} leaves the stored range")
    return replace(word, origin_index=new)


def split_seed(master: int, index: int) -> int:
    """Counter-based child seed: depends only on (master, index)."""
    ss = np.random.SeedSequence(master, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def map_indexed(func, args_list, workers: int = 1):
    """Apply ``func`` to every argument tuple, returning results in input order.

    Output is identical for any worker count: each task is seeded from its
    own arguments and results are never reduced inside the pool.
    """
    if workers <= 1 or len(args_list) <= 1:
        return [func(*a) for a in args_list]
    chunk = max(1, len(args_list) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_star, [(func, a) for a in args_list], chunksize=chunk))


def _star(pair):
    func, args = pair
    return func(*args)
