"""Deterministic 64-bit pseudo-random generator with derived child streams.

The generator is splitmix64: the state advances by the golden-gamma
increment 0x9E3779B97F4A7C15 per draw and each output is the advanced
state pushed through the Stafford mix13 finalizer (multipliers
0xBF58476D1CE4E5B9 and 0x94D049BB133111EB). Because output i depends only
on seed + (i+1)*gamma, bulk draws vectorize over numpy uint64 and produce
bit-identical sequences to the scalar path.

Child streams are derived from the *seed*, never the consumed state, so
`rng.child("noise", 17)` is the same stream no matter how much of `rng`
was used before the call. String keys hash with FNV-1a 64.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_TWO53 = float(1 << 53)


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * _MIX1 & _MASK
    z = (z ^ (z >> 27)) * _MIX2 & _MASK
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def _hash_key(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & _MASK
    if isinstance(key, str):
        h = _FNV_OFFSET
        for b in key.encode("utf-8"):
            h = ((h ^ b) * _FNV_PRIME) & _MASK
        return h
    raise TypeError(f"rng keys must be int or str, got {type(key).__name__}")


class Rng:
    """splitmix64 stream; identical seed and call sequence give identical draws."""

    __slots__ = ("seed", "_state", "_count")

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self._state = self.seed
        self._count = 0

    def child(self, *keys) -> "Rng":
        """Derive an independent stream keyed by (this seed, *keys)."""
        h = self.seed
        for key in keys:
            h = _mix((h ^ _hash_key(key)) + _GAMMA & _MASK)
        return Rng(h)

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        self._count += 1
        return _mix(self._state)

    def _u64_block(self, n: int) -> np.ndarray:
        idx = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GAMMA)
        block = _mix_array(np.uint64(self._state) + idx)
        self._state = (self._state + n * _GAMMA) & _MASK
        self._count += n
        return block

    def uniform(self) -> float:
        # 53-bit mantissa draw in [0, 1)
        return (self.next_u64() >> 11) / _TWO53

    def uniforms(self, n: int) -> np.ndarray:
        return (self._u64_block(n) >> np.uint64(11)) / _TWO53

    def normal(self) -> float:
        # Box-Muller, cosine branch; consumes exactly two uniforms
        u1 = self.uniform()
        u2 = self.uniform()
        return float(np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(2.0 * np.pi * u2))

    def normals(self, n: int) -> np.ndarray:
        u = self.uniforms(2 * n).reshape(n, 2)
        return np.sqrt(-2.0 * np.log(1.0 - u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])

    def randint(self, n: int) -> int:
        """Uniform int in [0, n)."""
        if n <= 0:
            raise ValueError(f"randint bound must be positive, got {n}")
        return min(int(self.uniform() * n), n - 1)

    def shuffle(self, items: list) -> None:
        # Fisher-Yates, in place
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list:
        order = list(range(n))
        self.shuffle(order)
        return order

    def choice(self, items):
        if not items:
            raise ValueError("choice on empty sequence")
        return items[self.randint(len(items))]

    def __repr__(self):
        return f"Rng(seed={self.seed:#x}, drawn={self._count})"
