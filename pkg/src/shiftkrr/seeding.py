"""Deterministic seed derivation for parallel replications.

Every replication / grid cell gets its own generator seeded from
``derive_seed(master_seed, *indices)``, so results are reproducible in
isolation and independent of worker scheduling.
"""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One step of the SplitMix64 avalanche mixer (Steele et al.).

    Maps a 64-bit integer to a 64-bit integer; every input bit affects
    every output bit.
    """
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, *indices: int) -> int:
    """Derive a child seed from a master seed and a tuple of stream indices.

    Each index is folded in with xor and re-avalanched, so streams for
    distinct index tuples are statistically independent.
    """
    x = splitmix64(master_seed & _MASK64)
    for idx in indices:
        x = splitmix64(x ^ (int(idx) & _MASK64))
    return x


def rng_for(master_seed: int, *indices: int) -> np.random.Generator:
    """PCG64 generator for the (master_seed, *indices) stream."""
    return np.random.default_rng(derive_seed(master_seed, *indices))
