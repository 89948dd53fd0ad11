"""Deterministic PRNG for lead-profile generation.

Implements xoshiro256** seeded through splitmix64, both public-domain
algorithms by Blackman & Vigna. Chosen over ``random.Random`` so that the
generator is fully specified by its public algorithm description and a
reimplementation in any language reproduces identical profiles from the
same seed. The pure-Python port is tested against outputs of the compiled
C reference.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class SplitMix64:
    """Stream used only to expand a 64-bit seed into xoshiro state."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


class Xoshiro256StarStar:
    """xoshiro256** 1.0; state filled from four splitmix64 outputs."""

    def __init__(self, seed: int):
        mix = SplitMix64(seed)
        self._s = [mix.next_u64() for _ in range(4)]

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        # 53 high bits -> double in [0, 1), the conventional mapping
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()
