"""Portable 64-bit random streams.

Every random draw in the pipeline comes from xoshiro256** (Blackman & Vigna),
seeded by expanding a 64-bit seed through SplitMix64.  A uniform double is
``(next() >> 11) * 2**-53``.  Both generators are simple enough to re-implement
bit-exactly elsewhere, which is what makes model files reproducible across
machines and implementations.

Derived seeds are a documented function of ``(seed, stage, K, chain)``::

    h = seed
    for part in (stage_code(stage), K, chain):
        h = splitmix64_mix(h ^ part)

where ``stage_code`` is the first 8 bytes (big-endian) of the SHA-256 of the
UTF-8 stage name.
"""

from __future__ import annotations

import hashlib

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64_mix(z: int) -> int:
    """SplitMix64 finalizer applied to ``z + GOLDEN_GAMMA``."""
    z = (z + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix64_stream(seed: int, n: int) -> list[int]:
    out = []
    state = seed & MASK64
    for _ in range(n):
        out.append(splitmix64_mix(state))
        state = (state + GOLDEN_GAMMA) & MASK64
    return out


def stage_code(stage: str) -> int:
    return int.from_bytes(hashlib.sha256(stage.encode("utf-8")).digest()[:8], "big")


def derive_seed(seed: int, stage: str, k: int = 0, chain: int = 0) -> int:
    h = seed & MASK64
    for part in (stage_code(stage), k, chain):
        h = splitmix64_mix(h ^ (part & MASK64))
    return h


def xoshiro_state(seed: int) -> np.ndarray:
    """Initial xoshiro256** state: four consecutive SplitMix64 outputs."""
    return np.array(splitmix64_stream(seed, 4), dtype=np.uint64)


class Xoshiro256:
    """Pure-Python xoshiro256**; the reference the compiled kernels must match."""

    def __init__(self, seed: int):
        self.s = [int(v) for v in xoshiro_state(seed)]

    @staticmethod
    def _rotl(x: int, k: int) -> int:
        return ((x << k) | (x >> (64 - k))) & MASK64

    def next_u64(self) -> int:
        s = self.s
        result = (self._rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = self._rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def next_u64(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True)
def next_uniform(s):
    return np.float64(next_u64(s) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def uniform_block(s, n):
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        out[i] = next_uniform(s)
    return out
