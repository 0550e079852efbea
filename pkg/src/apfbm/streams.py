"""Named, reproducible random substreams.

Every random quantity in the package is drawn from a generator derived from
``(base_seed, *tags)``, so that a given tag always replays the same numbers
no matter how work is split across threads.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["make_rng", "check_seed"]

_U64 = 2**64


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed < _U64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def _tag_key(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        if tag < 0:
            raise ValueError(f"integer stream tags must be non-negative, got {tag}")
        return int(tag)
    # crc32 is stable across processes, unlike hash()
    return zlib.crc32(str(tag).encode("utf-8")) + (1 << 40)


def make_rng(seed: int, *tags) -> np.random.Generator:
    """Return a generator for the substream ``(seed, *tags)``.

    Tags may be non-negative integers (e.g. a sample index) or strings
    (e.g. a role such as ``"fbm"`` or ``"gamma"``).
    """
    seed = check_seed(seed)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(_tag_key(t) for t in tags))
    return np.random.Generator(np.random.PCG64(ss))
