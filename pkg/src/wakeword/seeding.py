"""Deterministic seed derivation shared across the pipeline.

Every random draw in the toolkit flows from an explicit integer seed through
:func:`rng_for`, so a (seed, purpose, index) triple always reproduces the
same stream regardless of call order or platform.
"""

from __future__ import annotations

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def mix64(h: int) -> int:
    """splitmix64 finalizer: full-avalanche scramble of a 64-bit value.

    FNV-1a alone diffuses trailing input bytes poorly into the high bits, so
    anything bucketing on hash magnitude must scramble first.
    """
    h &= _MASK64
    h ^= h >> 30
    h = (h * 0xBF58476D1CE4E5B9) & _MASK64
    h ^= h >> 27
    h = (h * 0x94D049BB133111EB) & _MASK64
    h ^= h >> 31
    return h


def unit_hash(data: bytes) -> float:
    """Deterministic hash of `data` mapped uniformly into [0, 1)."""
    return mix64(fnv1a64(data)) / 2.0**64


def rng_for(*parts: int | str) -> np.random.Generator:
    """A PCG64 generator keyed by the given parts (ints used as-is, strings
    hashed). Same parts, same stream."""
    words = [fnv1a64(p.encode("utf-8")) if isinstance(p, str) else int(p) & _MASK64 for p in parts]
    return np.random.default_rng(np.random.SeedSequence(words))
