"""PCG32 random number generator (XSH-RR output, 64-bit LCG state).

Bit-exact with the reference ``pcg32_srandom_r`` / ``pcg32_random_r`` pair, so
a given ``(seed, stream)`` produces the same sequence on every platform.
Bulk draws use LCG jump-ahead so that large initializations stay vectorized
while remaining identical to the scalar sequence.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
MULTIPLIER = 6364136223846793005

# Stream selectors for the independent consumers of randomness.
STREAM_INIT = 1
STREAM_SPLIT = 2
STREAM_SHUFFLE = 3
STREAM_AUGMENT = 4
STREAM_TSNE = 5
STREAM_SYNTH = 6

_BLOCK = 4096


def _output(old: int) -> int:
    xorshifted = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
    rot = old >> 59
    return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & 0xFFFFFFFF


def splitmix64(x: int) -> int:
    """Finalizer used to turn structured seeds (base ^ epoch) into well-mixed ones."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix_seed(base_seed: int, index: int) -> int:
    return splitmix64((base_seed ^ index) & MASK64)


def _jump_tables(n: int) -> tuple[np.ndarray, np.ndarray]:
    # mult[k] = a^k, incsum[k] = 1 + a + ... + a^(k-1)   (mod 2^64)
    mult = np.empty(n + 1, dtype=np.uint64)
    incsum = np.empty(n + 1, dtype=np.uint64)
    m, s = 1, 0
    for k in range(n + 1):
        mult[k] = m
        incsum[k] = s
        s = (s * MULTIPLIER + 1) & MASK64
        m = (m * MULTIPLIER) & MASK64
    return mult, incsum


_MULT, _INCSUM = _jump_tables(_BLOCK)


class Pcg32:
    """Seeded PCG32 stream.

    The object is mutated by draws; use :meth:`copy` to branch a stream.
    """

    __slots__ = ("state", "inc")

    def __init__(self, seed: int, stream: int = 0):
        self.state = 0
        self.inc = ((stream << 1) | 1) & MASK64
        self.next_u32()
        self.state = (self.state + (seed & MASK64)) & MASK64
        self.next_u32()

    def copy(self) -> "Pcg32":
        other = Pcg32.__new__(Pcg32)
        other.state = self.state
        other.inc = self.inc
        return other

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Pcg32) and (self.state, self.inc) == (other.state, other.inc)

    def __repr__(self) -> str:
        return f"Pcg32(state={self.state:#018x}, inc={self.inc:#018x})"

    def next_u32(self) -> int:
        old = self.state
        self.state = (old * MULTIPLIER + self.inc) & MASK64
        return _output(old)

    def u32_array(self, n: int) -> np.ndarray:
        """The next ``n`` outputs as a uint32 array (same values as n calls of next_u32)."""
        out = np.empty(n, dtype=np.uint32)
        inc = np.uint64(self.inc)
        done = 0
        with np.errstate(over="ignore"):
            while done < n:
                k = min(_BLOCK, n - done)
                s = np.uint64(self.state)
                old = _MULT[:k] * s + _INCSUM[:k] * inc
                xorshifted = (((old >> np.uint64(18)) ^ old) >> np.uint64(27)) & np.uint64(0xFFFFFFFF)
                rot = old >> np.uint64(59)
                left = (np.uint64(32) - rot) & np.uint64(31)
                word = (xorshifted >> rot) | (xorshifted << left)
                out[done:done + k] = (word & np.uint64(0xFFFFFFFF)).astype(np.uint32)
                self.state = int(_MULT[k] * s + _INCSUM[k] * inc)
                done += k
        return out

    def random(self) -> float:
        """Uniform float in [0, 1) with 32 bits of resolution."""
        return self.next_u32() * 2.0**-32

    def uniform(self, lo: float, hi: float) -> float:
        if not lo < hi:
            raise ValueError(f"uniform requires lo < hi, got [{lo}, {hi})")
        v = lo + (hi - lo) * self.random()
        return v if v < hi else math.nextafter(hi, lo)

    def uniform_array(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        if not lo < hi:
            raise ValueError(f"uniform requires lo < hi, got [{lo}, {hi})")
        u = self.u32_array(n).astype(np.float64) * 2.0**-32
        v = lo + (hi - lo) * u
        return np.minimum(v, math.nextafter(hi, lo))

    def bounded(self, bound: int) -> int:
        """Unbiased integer in [0, bound) (pcg32_boundedrand_r)."""
        if bound < 1 or bound > 1 << 32:
            raise ValueError(f"bound out of range: {bound}")
        threshold = ((1 << 32) - bound) % bound
        while True:
            r = self.next_u32()
            if r >= threshold:
                return r % bound

    def normal_array(self, n: int) -> np.ndarray:
        """Standard normal draws via Box-Muller; consumes 2 outputs per pair."""
        pairs = (n + 1) // 2
        u = self.u32_array(2 * pairs).astype(np.float64)
        u1 = (u[0::2] + 1.0) * 2.0**-32  # (0, 1]
        u2 = u[1::2] * 2.0**-32
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        return z[:n]

    def shuffle(self, items: list) -> list:
        """Fisher-Yates shuffle, returning a new list."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.bounded(i + 1)
            out[i], out[j] = out[j], out[i]
        return out

    def permutation(self, n: int) -> np.ndarray:
        return np.asarray(self.shuffle(list(range(n))), dtype=np.int64)


def rng_uniform(rng: Pcg32, lo: float, hi: float) -> tuple[float, Pcg32]:
    """Functional form: returns the draw and the advanced generator; ``rng`` is untouched."""
    nxt = rng.copy()
    return nxt.uniform(lo, hi), nxt
