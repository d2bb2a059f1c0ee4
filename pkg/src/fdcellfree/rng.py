"""Deterministic random streams derived from one 64-bit master seed."""
from __future__ import annotations

import hashlib

import numpy as np

_MASK32 = 0xFFFFFFFF


def _tag_words(tag: str):
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def substream(seed: int, tag: str, *index: int) -> np.random.Generator:
    """Generator for the (tag, index) sub-stream of ``seed``.

    The entropy words are a stable function of the inputs, so the same
    arguments give the same stream on every platform and run.
    """
    seed = int(seed)
    if seed < 0 or seed >= 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    words = [seed & _MASK32, (seed >> 32) & _MASK32] + _tag_words(tag)
    words += [int(i) & _MASK32 for i in index]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


def as_generator(seed_or_rng, tag: str = "default") -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return substream(seed_or_rng, tag)
