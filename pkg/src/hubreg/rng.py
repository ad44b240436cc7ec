"""Named, non-overlapping random streams derived from a single 64-bit seed.

Each stream is a Philox (counter-based) generator keyed by
``SeedSequence(seed, spawn_key=(stream_id,))``. Streams with different ids
never share state, so regenerating one (say, the noise) leaves the others
untouched, and results do not depend on scheduling order.
"""

import hashlib
import struct

import numpy as np

STREAMS = {
    "covariates": 1,
    "noise": 2,
    "support": 3,
    "cv_folds": 4,
    "directions": 5,
    "probe": 6,
    "bootstrap": 7,
}

MASK64 = (1 << 64) - 1


def stream(seed: int, name: str) -> np.random.Generator:
    """Generator for stream ``name`` under ``seed``."""
    try:
        key = STREAMS[name]
    except KeyError:
        raise ValueError(f"unknown stream {name!r}; known: {sorted(STREAMS)}") from None
    ss = np.random.SeedSequence(int(seed) & MASK64, spawn_key=(key,))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(base: int, *items: int) -> int:
    """``base XOR hash(items)`` as an unsigned 64-bit integer.

    The hash is BLAKE2b over the packed items, which is stable across
    processes and Python versions (unlike ``hash``).
    """
    payload = b"".join(struct.pack("<q", int(i)) for i in items)
    h = int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")
    return (int(base) ^ h) & MASK64
