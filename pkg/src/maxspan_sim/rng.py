"""Named PRNG substreams.

Every random structural choice draws from its own PCG64 stream keyed by
``(seed, *path)``. Path components may be strings or ints; strings are hashed
with CRC32 so the key is stable across Python processes and platforms.
Adding a new stream never shifts the draws of an existing one.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part: str | int) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError("substream path ints must be non-negative")
    return int(part)


def substream(seed: int, *path: str | int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(p) for p in path))
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(seed: int, *path: str | int) -> int:
    """A 63-bit integer seed derived from ``(seed, *path)``."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(p) for p in path))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
