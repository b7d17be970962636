"""Schedule-independent seed derivation.

Every random draw in an ensemble comes from ``numpy.random.PCG64`` seeded
by ``SeedSequence(entropy=base_seed, spawn_key=keys)``. ``SeedSequence``
hashes its entropy and spawn key into the generator state, so streams for
different keys are statistically independent and their values depend only
on ``(base_seed, keys)``, never on the order in which trials run.
"""

from __future__ import annotations

import numpy as np

# stream tags used as the last spawn-key element
STATE = 0
SCREEN = 1
NOISE = 2


def seed_sequence(base_seed: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(base_seed), spawn_key=tuple(int(k) for k in keys))


def derive_seed(base_seed: int, *keys: int) -> int:
    """Non-negative 63-bit integer seed mixed from ``base_seed`` and ``keys``."""
    word = seed_sequence(base_seed, *keys).generate_state(1, dtype=np.uint64)[0]
    return int(word >> np.uint64(1))


def trial_seed(base_seed: int, trial_index: int) -> int:
    return derive_seed(base_seed, trial_index)
