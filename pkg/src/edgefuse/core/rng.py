"""SplitMix64 generator.

state_{n+1} = state_n + 0x9E3779B97F4A7C15 (mod 2**64); the output is the
standard SplitMix64 finalizer applied to the new state. Floats take the top
53 bits. Vectorized with numpy uint64 arithmetic, so drawing ``n`` values at
once yields exactly the same sequence as ``n`` scalar draws.
"""
from __future__ import annotations

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


class Rng:
    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self, n: int | None = None) -> np.ndarray | int:
        count = 1 if n is None else int(n)
        steps = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(GAMMA)
            out = _mix(z)
        self.state = (self.state + count * GAMMA) & _MASK
        return int(out[0]) if n is None else out

    def uniform(self, shape=()) -> np.ndarray:
        """Floats in the open interval (0, 1)."""
        n = int(np.prod(shape, dtype=np.int64)) if shape != () else 1
        bits = self.next_u64(n) >> np.uint64(11)
        u = (bits.astype(np.float64) + 0.5) * (1.0 / (1 << 53))
        return u.reshape(shape)

    def normal(self, shape=()) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64)) if shape != () else 1
        u1 = self.uniform((n,))
        u2 = self.uniform((n,))
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return z.reshape(shape)

    def gumbel(self, shape=()) -> np.ndarray:
        u = self.uniform(shape)
        return -np.log(-np.log(u))

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        """Integers in [low, high); modulo bias is negligible for small ranges."""
        n = int(np.prod(shape, dtype=np.int64)) if shape != () else 1
        span = np.uint64(high - low)
        vals = (self.next_u64(n) % span).astype(np.int64) + low
        return vals.reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        keys = self.next_u64(n)
        return np.argsort(keys, kind="stable")

    def spawn(self, salt: int) -> "Rng":
        return Rng(int(_mix(np.array([(self.state ^ salt) & _MASK], dtype=np.uint64))[0]))
