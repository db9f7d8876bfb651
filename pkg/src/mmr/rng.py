"""Counter-derived per-element random streams.

Each element index gets its own stream whose 128-bit state is derived from
``(base_seed, element_index)`` by two SplitMix64 finalizer rounds.  Output
comes from xoroshiro128++.  Because the state depends only on the element
index, draws are identical no matter how elements are chunked or which
backend evaluates them.
"""

from __future__ import annotations

import math
import os

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB

# stream index reserved for draws made outside any map-family element
CONTROLLER_STREAM = MASK64


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class RngStream:
    __slots__ = ("s0", "s1")

    def __init__(self, s0: int, s1: int):
        if s0 == 0 and s1 == 0:
            s1 = GOLDEN
        self.s0 = s0
        self.s1 = s1

    @property
    def state(self) -> tuple[int, int]:
        return self.s0, self.s1

    def next_u64(self) -> int:
        s0, s1 = self.s0, self.s1
        result = (_rotl((s0 + s1) & MASK64, 17) + s0) & MASK64
        s1 ^= s0
        self.s0 = _rotl(s0, 49) ^ s1 ^ ((s1 << 21) & MASK64)
        self.s1 = _rotl(s1, 28)
        return result

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def normal(self) -> float:
        # Box-Muller; both uniforms are always consumed, the spare is dropped
        u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)


def derive_stream(base_seed: int, element_index: int) -> RngStream:
    x = (base_seed ^ ((GOLDEN * ((element_index + 1) & MASK64)) & MASK64)) & MASK64
    s0 = mix64((x + GOLDEN) & MASK64)
    s1 = mix64((x + 2 * GOLDEN) & MASK64)
    return RngStream(s0, s1)


def stream_uniform(stream: RngStream) -> float:
    return stream.uniform()


def stream_normal(stream: RngStream) -> float:
    return stream.normal()


def entropy_seed() -> int:
    """A fresh 63-bit seed from host entropy (fits the DSL integer type)."""
    return int.from_bytes(os.urandom(8), "big") >> 1


def entropy_stream() -> RngStream:
    return derive_stream(entropy_seed(), CONTROLLER_STREAM)
