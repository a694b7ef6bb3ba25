"""Deterministic RNG splitting.

Splitting rule: the generator for (seed, key_1, ..., key_m) is numpy's
default PCG64 seeded with SeedSequence([I(seed), I(key_1), ..., I(key_m)]),
where I maps ints to themselves (masked to 63 bits) and any other key to
the first 8 bytes of the SHA-256 digest of its str().  Parallel trials
derive their generator from (seed, ..., trial_index), so results never
depend on scheduling or worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["split_rng"]

_MASK = (1 << 63) - 1


def _to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & _MASK
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def split_rng(seed, *keys) -> np.random.Generator:
    entropy = [_to_int(seed)] + [_to_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
