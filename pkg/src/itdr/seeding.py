"""Counter-based seed derivation.

Every random draw in the package is keyed by a tuple of integers hashed
into a 63-bit seed, so results never depend on evaluation order.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

_MASK63 = (1 << 63) - 1
_MASK64 = (1 << 64) - 1


def derive_seed(*keys: int) -> int:
    """Hash an integer tuple into a non-negative 63-bit seed."""
    h = hashlib.blake2b(digest_size=8, person=b"itdr-seed")
    for k in keys:
        h.update(struct.pack("<Q", int(k) & _MASK64))
    return int.from_bytes(h.digest(), "little") & _MASK63


def rng_for(*keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*keys))
