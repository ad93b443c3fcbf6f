"""Seed derivation and Gaussian variates.

Randomness is fully determined by 64-bit seeds.  Per-replicate seeds are
derived from ``(master_seed, n, p, replicate_index)`` with a splitmix64
style mixer written out in integer arithmetic, so they are identical on
every platform.  Variates come from numpy's Philox4x64-10 counter-based bit
generator (whose raw stream numpy keeps stable across releases), mapped to
uniforms on the open interval (0, 1) from the top 53 bits and then to
normals by the inverse normal CDF.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

PRNG_NAME = "philox4x64-10+ndtri"
PRNG_VERSION = 1

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """splitmix64 finalizer (a bijection on 64-bit integers)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def replicate_seed(master_seed: int, n: int, p: int, replicate_index: int) -> int:
    """Stable 64-bit seed for one replicate.

    Each field is folded in as ``h = mix64((h ^ field) + GOLDEN)``, starting
    from ``h = mix64(master_seed)``; for fixed leading fields the map is
    injective in ``replicate_index``.
    """
    h = mix64(int(master_seed))
    for f in (int(n), int(p), int(replicate_index)):
        h = mix64(((h ^ (f & _MASK64)) + _GOLDEN) & _MASK64)
    return h


def uniforms(seed: int, size: int) -> np.ndarray:
    raw = np.random.Philox(key=int(seed) & _MASK64).random_raw(size)
    raw = np.atleast_1d(np.asarray(raw, dtype=np.uint64))
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def standard_normals(seed: int, size: int) -> np.ndarray:
    return ndtri(uniforms(seed, size))
