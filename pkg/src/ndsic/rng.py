"""Hierarchical, seed-derived random streams.

A stream is identified by a 64-bit seed plus a derivation path such as
``("run", "role")``.  Identical (seed, path) pairs always yield identical
draws and distinct paths yield statistically independent streams, so the
order in which a caller asks for sub-streams never changes the numbers.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np


def _path_key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("integer path components must be non-negative")
        return int(part)
    # crc32 is stable across interpreter runs, unlike hash()
    return zlib.crc32(str(part).encode("utf-8")) | (1 << 32)


@dataclass(frozen=True)
class RngStream:
    seed: int
    path: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")

    def child(self, *parts) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(parts))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=int(self.seed), spawn_key=tuple(_path_key(p) for p in self.path)
        )

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))
