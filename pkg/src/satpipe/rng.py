"""Deterministic 64-bit random generator used everywhere reproducibility matters.

The generator is splitmix64. All randomized operations in this package
(channel noise, metadata jitter, false-detection crops, batch sampling,
synthetic traces) consume this single documented stream so that outputs are
bit-reproducible across platforms and independent of interpreter or numpy
versions. The derived draws are defined exactly as:

* ``next_u64``   -- one splitmix64 step.
* ``uniform``    -- ``next_u64() >> 11`` scaled by ``2**-53`` into [0, 1).
* ``randint``    -- ``lo + next_u64() % (hi - lo + 1)`` (inclusive bounds).
* ``uniform_in`` -- ``lo + uniform() * (hi - lo)``.

Replay tests and any external reimplementation must follow these formulas.
"""

from __future__ import annotations

_MASK = 0xFFFFFFFFFFFFFFFF


class SplitMix64:
    """splitmix64 stream with 64-bit state."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + self.uniform() * (hi - lo)

    def randint(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi], both ends inclusive."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.next_u64() % (hi - lo + 1)


def hash_seed(*parts: str) -> int:
    """Derive a 64-bit seed from string parts, stable across runs.

    FNV-1a over the UTF-8 bytes of the parts joined with NUL separators.
    """
    h = 0xCBF29CE484222325
    for part in parts:
        for b in part.encode("utf-8") + b"\x00":
            h ^= b
            h = (h * 0x100000001B3) & _MASK
    return h
