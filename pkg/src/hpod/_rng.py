"""Seed derivation helpers.

All randomness in the package flows from one integer root seed. Child seeds
are derived with splitmix64 so that, e.g., tree ``t`` of a forest gets the
same stream regardless of how many other trees are built or in what order.
"""
import hashlib

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(root: int, *keys) -> int:
    """Mix ``root`` with integer or string keys into a 63-bit child seed."""
    s = int(root) & _MASK
    for k in keys:
        if isinstance(k, str):
            k = int.from_bytes(hashlib.sha256(k.encode()).digest()[:8], "little")
        s = splitmix64(s ^ (int(k) & _MASK))
    return s >> 1


def rng(root: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *keys))
