"""Per-component seed derivation.

Run ``i`` of a batch uses seed ``scenario.seed + i``. Each component of a
run (keys, R, secrets, delay sequences) draws from its own stream::

    derive_seed(seed, label) = first 64 bits of
        SeedSequence(entropy=seed, spawn_key=(crc32(label),)).generate_state

so changing how one component consumes randomness never shifts another.
"""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(seed: int, label: str) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(zlib.crc32(label.encode()),))
    lo, hi = ss.generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)
