"""Seeding policy.

All randomness goes through :func:`generator`, a Philox (counter-based)
bit generator keyed by a :class:`numpy.random.SeedSequence`. Gaussian
variates come from ``Generator.standard_normal`` (numpy's ziggurat).

Ensemble member ``i`` of base seed ``s`` uses the 64-bit seed
``derive_seed(s, i)``: the first uint64 word of
``SeedSequence(entropy=s, spawn_key=(i,))``.
"""

import numpy as np

SEED_MASK = (1 << 64) - 1


def generator(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed) & SEED_MASK)))


def derive_seed(base_seed, index):
    ss = np.random.SeedSequence(int(base_seed) & SEED_MASK, spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def derive_seeds(base_seed, n, start=0):
    return [derive_seed(base_seed, i) for i in range(start, start + n)]


def standard_normals(seeds, size):
    """One row of ``size`` N(0,1) draws per seed."""
    out = np.empty((len(seeds), size))
    for row, seed in enumerate(seeds):
        out[row] = generator(seed).standard_normal(size)
    return out
