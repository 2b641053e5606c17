"""Named random substreams derived from one master seed."""

from __future__ import annotations

import zlib

import numpy as np


class Streams:
    """Factory of independent generators keyed by ``(name, *index)``.

    Each component (switching, every channel, every agent's init, noise, SPSA
    signs) draws from its own stream, so adding draws to one component never
    shifts another.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)

    def get(self, name: str, *index: int) -> np.random.Generator:
        key = (zlib.crc32(name.encode()), *(int(k) for k in index))
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=key)
        return np.random.Generator(np.random.PCG64(ss))
