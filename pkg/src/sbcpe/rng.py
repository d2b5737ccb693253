"""Deterministic random substreams.

Every random draw in the package comes from a PCG64 generator seeded by
``numpy.random.SeedSequence(master_seed, spawn_key=(purpose, *indices))``.
The purpose codes below are part of the reproducibility contract: changing
one changes every downstream trace.
"""

from __future__ import annotations

import numpy as np

GAME = 0
AGENT = 1
REPLICA = 2
SAMPLE = 3
PERTURB = 4


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return seed


def substream(seed: int, purpose: int, *indices: int) -> np.random.Generator:
    """Return the PCG64 generator for ``(seed, purpose, *indices)``."""
    key = (int(purpose),) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(seed: int, purpose: int, *indices: int) -> int:
    """Derive a 64-bit integer seed, e.g. the per-replica seed of a batch."""
    key = (int(purpose),) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])
