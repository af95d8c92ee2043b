"""Counter-based random streams.

Every random object is drawn from a Philox generator keyed by a
``SeedSequence`` built from the run seed plus a path of integers
(for instance ``(seed, iteration)``).  Two streams with different paths
are statistically independent and the mapping is order independent, so
parallel trial execution reproduces the serial result bit for bit.
"""
from __future__ import annotations

import numpy as np


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator for ``seed`` split along ``path``."""
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path: int) -> int:
    """A 63-bit integer seed derived from ``seed`` and ``path``."""
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
