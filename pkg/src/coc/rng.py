"""Hierarchical, counter-based random streams.

Every random draw in the package comes from ``stream(seed, *keys)``: a Philox
generator whose key is derived from the root seed plus a path such as
``(centre_id, round, "np")``.  Two calls with the same path always produce the
same numbers regardless of how many other streams were used in between, which
keeps results independent of execution order and worker count.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_word(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"stream keys must be nonnegative, got {key}")
        return int(key)
    if isinstance(key, str):
        # crc32 is stable across interpreter runs, unlike hash()
        return zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"unsupported stream key type: {type(key).__name__}")


def seed_sequence(seed: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_key_word(k) for k in keys))


def stream(seed: int, *keys) -> np.random.Generator:
    """Return the generator for ``seed`` refined by the path ``keys``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *keys)))
