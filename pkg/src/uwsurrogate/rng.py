"""Named, seedable counter-based random streams.

Every stochastic operation takes an explicit ``numpy.random.Generator``.
Streams are Philox generators whose key is derived from a root seed and a
path of names/indices, so ``stream(7, "record", 12)`` is the same on every
machine and independent of how many other streams were drawn before it.
"""

from __future__ import annotations

import zlib

import numpy as np


def _to_int(part: int | str) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream path indices must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def stream(seed: int, *path: int | str) -> np.random.Generator:
    """Return an independent Philox generator for ``(seed, *path)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_to_int(p) for p in path))
    key = ss.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a 63-bit integer seed from ``rng`` (for handing to sub-streams)."""
    return int(rng.integers(0, 2**63 - 1))
