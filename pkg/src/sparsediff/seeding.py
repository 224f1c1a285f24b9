"""Deterministic seed derivation.

Every random stream in the package is derived from a master seed and a tuple
of keys through a keyed hash, so results never depend on scheduling or on
global RNG state.
"""
from __future__ import annotations

import hashlib

import numpy as np

_PERSON = b"sparsediff-seed"


def derive_seed(master_seed: int, *keys) -> int:
    """Return a 64-bit seed for the stream named by ``keys``.

    Keys may be ints, strings, floats or nested tuples of these; their ``repr``
    is hashed, which is stable across processes and platforms.
    """
    h = hashlib.blake2b(digest_size=8, person=_PERSON[:16])
    h.update(repr(int(master_seed)).encode())
    for k in keys:
        h.update(b"\x1f")
        h.update(repr(k).encode())
    return int.from_bytes(h.digest(), "little")


def rng_for(master_seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, *keys))


def philox_key(master_seed: int, *keys) -> tuple[int, int]:
    """Split a derived 64-bit seed into the two 32-bit Philox key words."""
    s = derive_seed(master_seed, "philox", *keys)
    return s & 0xFFFFFFFF, s >> 32
