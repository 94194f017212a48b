"""Deterministic random-number streams.

Every stochastic routine in the package draws from a ``SeededRng`` so that
identical (seed, stream_id) pairs reproduce identical draw sequences
bit-for-bit on every platform. Streams are derived from numpy SeedSequence
spawn keys, so distinct stream ids are statistically independent and can be
consumed in parallel.
"""

from __future__ import annotations

import numpy as np


class SeededRng:
    """A stateful PCG64 stream identified by (seed, stream_id)."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, stream_id: int) -> "SeededRng":
        """Fresh independent stream sharing this rng's seed."""
        return SeededRng(self.seed, stream_id)

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, stream_id={self.stream_id})"
