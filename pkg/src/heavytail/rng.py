"""Explicitly seeded, counter-based random streams.

Every random draw in the package goes through :func:`generator`, which wraps
numpy's Philox bit generator. Child streams are derived from a parent seed and
a string key, so per-subsample or per-replicate streams do not depend on
scheduling order.
"""
from __future__ import annotations

import hashlib

import numpy as np

SeedLike = int | np.random.SeedSequence | np.random.Generator | None


def seed_sequence(seed: int | np.random.SeedSequence) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.SeedSequence(int(seed))


def generator(seed: SeedLike) -> np.random.Generator:
    """Philox-backed generator; an existing Generator is passed through untouched."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed_sequence(seed)))


def _key_words(key) -> tuple[int, ...]:
    digest = hashlib.sha256(repr(key).encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


def derive(seed: int | np.random.SeedSequence, key) -> np.random.SeedSequence:
    """Child seed for ``key`` (any repr-stable value, e.g. ``("LP", 1998, "all")``)."""
    parent = seed_sequence(seed)
    return np.random.SeedSequence(parent.entropy,
                                  spawn_key=tuple(parent.spawn_key) + _key_words(key))
