"""Counter-based keyed randomness.

Every draw is a pure function of its key tuple, so scans replay exactly and
independent workers agree without sharing generator state.
"""

from __future__ import annotations

import hashlib

_PERSON = b"hitlist6-prng"


def _digest(key: tuple) -> bytes:
    text = "\x1f".join(str(part) for part in key)
    return hashlib.blake2b(text.encode(), digest_size=16, person=_PERSON).digest()


def keyed_bits(nbits: int, *key) -> int:
    """``nbits`` (<= 128) uniformly distributed bits derived from ``key``."""
    if not 0 <= nbits <= 128:
        raise ValueError("nbits must be within [0, 128]")
    return int.from_bytes(_digest(key), "big") >> (128 - nbits)


def keyed_uniform(*key) -> float:
    """Uniform float in [0, 1)."""
    return (int.from_bytes(_digest(key)[:8], "big") >> 11) * (1.0 / (1 << 53))


def keyed_index(n: int, *key) -> int:
    """Index in ``range(n)``; modulo bias is below 2**-120 for practical ``n``."""
    if n <= 0:
        raise ValueError("n must be positive")
    return int.from_bytes(_digest(key), "big") % n
