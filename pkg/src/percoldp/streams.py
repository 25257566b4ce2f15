"""Derived random streams.

A stream for ``(master_seed, index)`` is Philox4x64 seeded through
``SeedSequence(master_seed, spawn_key=(index,))``, so the stream used by
trajectory ``i`` does not depend on how work is split across workers.
"""

import numpy as np


def stream(master_seed, index=None):
    key = () if index is None else (int(index),)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(master_seed), spawn_key=key)))


def derived_seed(master_seed, index):
    """A 64-bit integer seed derived from (master_seed, index)."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
