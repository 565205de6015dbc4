"""Keyed, replayable randomness.

Every random decision in the package is a pure function of a 128-bit root
seed and a structured key, so results do not depend on the order (or the
thread) in which walks and samples are produced.

The mixer is the SplitMix64 finalizer.  A key is folded into a 64-bit state
by chaining ``mix(state ^ mix(word + SALT))`` over its words; a walk's step
draws are then the SplitMix64 stream seeded at the walk's state.  The numba
kernels in :mod:`spectral_oracle.walks` reproduce these exact formulas.
"""

from __future__ import annotations

import enum
import secrets
from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1
MASK32 = (1 << 32) - 1
M1 = 0xBF58476D1CE4E5B9
M2 = 0x94D049BB133111EB
GOLDEN = 0x9E3779B97F4A7C15
SALT = 0xD1B54A32D192ED03
ROOT_SALT = 0x8CB92BA72F3D8DD7

STAY = -1


class Tag(enum.IntEnum):
    """Domain separators; each purpose draws from its own substream."""

    WALK_INIT = 1
    WALK_GRAM_P = 2
    WALK_GRAM_Q = 3
    WALK_QUERY = 4
    SAMPLE_IS = 5
    SAMPLE_S = 6
    CONDUCTANCE = 7
    TIE_BREAK = 8
    WALK_DIAGNOSTIC = 9


def mix(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * M1) & MASK64
    z = ((z ^ (z >> 27)) * M2) & MASK64
    return z ^ (z >> 31)


def fold(state: int, *words: int) -> int:
    for w in words:
        state = mix(state ^ mix((int(w) + SALT) & MASK64))
    return state


@dataclass(frozen=True)
class Seed:
    root: int

    def __post_init__(self):
        if not 0 <= self.root < (1 << 128):
            raise ValueError("seed root must be a 128-bit unsigned integer")

    @classmethod
    def from_hex(cls, text: str) -> "Seed":
        return cls(int(text, 16))

    @classmethod
    def fresh(cls) -> "Seed":
        return cls(secrets.randbits(128))

    @property
    def hex(self) -> str:
        return f"{self.root:032x}"

    @property
    def state(self) -> int:
        """64-bit starting state derived from both halves of the root."""
        lo = self.root & MASK64
        hi = self.root >> 64
        return mix(lo ^ mix((hi + ROOT_SALT) & MASK64))

    def derive(self, tag: int, *words: int) -> int:
        return fold(self.state, int(tag), *words)

    def __str__(self) -> str:
        return self.hex


def as_seed(seed) -> Seed:
    if isinstance(seed, Seed):
        return seed
    if isinstance(seed, str):
        return Seed.from_hex(seed)
    return Seed(int(seed))


@dataclass(frozen=True, order=True)
class WalkKey:
    """(tag, start, repetition, walk, step); ``step`` is 1-based."""

    tag: int
    start: int
    rep: int
    walk: int
    step: int


def walk_state(seed: Seed, tag: int, start: int, rep: int, walk: int) -> int:
    return seed.derive(tag, start, rep, walk)


def bounded(u: int, bound: int) -> int | None:
    """Lemire reduction of the high 32 bits of ``u`` to ``[0, bound)``.

    Returns None when the draw falls in the rejection zone.
    """
    prod = (u >> 32) * bound
    if (prod & MASK32) < ((1 << 32) % bound):
        return None
    return prod >> 32


def draw_bounded(u: int, bound: int) -> int:
    while True:
        c = bounded(u, bound)
        if c is not None:
            return c
        u = mix((u + GOLDEN) & MASK64)


def step_choice(seed, key: WalkKey, d: int) -> int:
    """Lazy-walk step for ``key``: a slot index in ``[0, d)`` or ``STAY``.

    Uniform over ``2d`` outcomes; outcomes ``>= d`` mean stay, so staying has
    probability exactly 1/2 and each slot 1/(2d).
    """
    seed = as_seed(seed)
    base = walk_state(seed, key.tag, key.start, key.rep, key.walk)
    u = mix((base + key.step * GOLDEN) & MASK64)
    c = draw_bounded(u, 2 * d)
    return c if c < d else STAY


def uniform_index(seed, tag: int, bound: int, *words: int) -> int:
    seed = as_seed(seed)
    return draw_bounded(mix(seed.derive(tag, *words)), bound)


def sample_vertices(seed, tag: int, count: int, n: int, replace: bool = True,
                    context: tuple[int, ...] = ()) -> np.ndarray:
    """Deterministic uniform vertex sample.

    ``context`` words extend the key so that distinct call sites with the
    same tag get independent samples.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    if not replace and count > n:
        raise ValueError(f"cannot draw {count} distinct vertices from {n}")
    seed = as_seed(seed)
    base = seed.derive(tag, *context)
    if replace:
        return _sample_with_replacement(np.uint64(base), count, n)
    # partial Fisher-Yates over a virtual identity permutation
    swapped: dict[int, int] = {}
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        j = i + draw_bounded(mix(fold(base, i)), n - i)
        out[i] = swapped.get(j, j)
        swapped[j] = swapped.get(i, i)
    return out


def _sample_with_replacement(base, count, n):
    from ._kernels import sample_with_replacement

    return sample_with_replacement(base, count, n)
