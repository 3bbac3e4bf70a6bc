"""Seeded, splittable random streams.

Every random draw in the package comes from a Philox (counter-based)
generator keyed by a master seed plus a tuple of integers naming the
stream, e.g. ``(FORWARD, t)``.  Two operations given the same seed but
different stream keys never share random numbers.
"""

from __future__ import annotations

import numpy as np

FORWARD = 0
BACKWARD = 1
COMBINE = 2

SeedLike = "int | np.random.SeedSequence"


def stream(seed, *key: int) -> np.random.Generator:
    """Return the generator for stream ``key`` under master ``seed``."""
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def replicate_seed(master_seed: int, index: int) -> int:
    """Hash ``(master_seed, index)`` into a 63-bit replicate seed."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
