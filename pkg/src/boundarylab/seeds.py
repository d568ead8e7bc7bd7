"""Deterministic seed derivation for parallel tasks.

Split rule: ``child = splitmix64(seed + (index + 1) * GOLDEN)`` where GOLDEN
is the 64-bit golden-ratio increment.  Any (seed, task-index) pair therefore
maps to a fixed 64-bit child seed, independent of scheduling order.
"""

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_MASK = 0xFFFFFFFFFFFFFFFF


def split_seed(seed: int, index: int) -> int:
    """Derive the 64-bit child seed for task `index` from a root seed."""
    z = (int(seed) + (int(index) + 1) * _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def rng_for(seed: int, index: int) -> np.random.Generator:
    """Generator seeded with the child seed of (seed, index)."""
    return np.random.default_rng(split_seed(seed, index))
