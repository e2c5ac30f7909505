"""Seeded random streams.

Every random draw in the package comes from numpy's ``PCG64`` bit generator
seeded through ``numpy.random.SeedSequence``.  An experiment seed is split
into independent streams by purpose::

    Generator(PCG64(SeedSequence(entropy=seed, spawn_key=(purpose, *extra))))

``purpose`` is one of the integer constants below and ``extra`` are optional
non-negative integers (e.g. a run index).  Both PCG64 and the SeedSequence
hashing are specified algorithms, so a stream is reproducible from the pair
``(seed, spawn_key)`` alone, independent of call order elsewhere.
"""

import numpy as np

INIT = 1
BATCHES = 2
ARCH = 3
POLICY = 4
NOISE = 5
TASK = 6
POOL = 7


def stream(seed: int, purpose: int, *extra: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(purpose), *map(int, extra)))
    return np.random.Generator(np.random.PCG64(ss))
