"""Named random substreams derived from one root seed.

Every consumer of randomness draws from its own generator, keyed by a
stable name (and optional integer qualifiers such as the epoch), so adding
a new consumer never shifts anybody else's stream.
"""
from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"root seed must be non-negative, got {seed}")
    key = (zlib.crc32(name.encode("utf-8")),) + tuple(int(e) for e in extra)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))
