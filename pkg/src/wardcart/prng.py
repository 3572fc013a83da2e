"""Seeded pseudo-random streams with stable cross-platform behavior.

Two generators are used throughout the simulator and are named in trace
headers so a run can be reproduced from its seed alone:

* ``lcg64``    -- 64-bit linear congruential generator (MMIX constants),
  used for message-drop decisions on the lossy link.
* ``pcg64``    -- numpy's PCG64, used for per-pixel image noise.

A single scenario seed is split into independent per-subsystem seeds with
splitmix64 over a label, so the noise stream of cart 0 never depends on
whether a link exists, and so on.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1

LCG_MULT = 6364136223846793005
LCG_INC = 1442695040888963407

GENERATOR_IDS = "lcg64(mmix)+pcg64(numpy)"


def splitmix64(x: int) -> int:
    """One splitmix64 scrambling step (maps 64-bit int to 64-bit int)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(seed: int, label: str) -> int:
    """Derive an independent 64-bit subsystem seed from (seed, label)."""
    x = splitmix64(seed & MASK64)
    for b in label.encode("utf-8"):
        x = splitmix64(x ^ b)
    return x


class Lcg64:
    """64-bit LCG; ``uniform()`` yields floats in [0, 1) from the top 53 bits."""

    def __init__(self, seed: int):
        self.state = splitmix64(seed & MASK64)

    def next_u64(self) -> int:
        self.state = (self.state * LCG_MULT + LCG_INC) & MASK64
        return self.state

    def uniform(self) -> float:
        return (self.next_u64() >> 11) / float(1 << 53)
