from __future__ import annotations

import zlib

import numpy as np

SEED_LIMIT = 2**64


class RandomStreams:
    """Splits one master seed into independent named substreams.

    ``streams.stream("channel")`` and ``streams.stream("grid", 3)`` are
    separate PCG64 generators; the same seed, name and indices always give
    the same sequence, in any process.
    """

    def __init__(self, seed: int) -> None:
        if not 0 <= seed < SEED_LIMIT:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed

    def sequence(self, name: str, *indices: int) -> np.random.SeedSequence:
        key = (zlib.crc32(name.encode("utf-8")), *indices)
        return np.random.SeedSequence(self.seed, spawn_key=key)

    def stream(self, name: str, *indices: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.sequence(name, *indices)))

    def __repr__(self) -> str:
        return f"RandomStreams(seed={self.seed})"
