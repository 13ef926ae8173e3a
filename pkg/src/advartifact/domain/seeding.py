"""Seeded, splittable random streams.

Every stochastic operation takes an explicit seed. Streams are split by
appending integer or string ids, so a child stream depends only on
``(seed, *stream_ids)`` and never on execution order.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _stream_word(stream_id: int | str) -> int:
    if isinstance(stream_id, str):
        digest = hashlib.blake2b(stream_id.encode(), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    return stream_id & _MASK64


def generator(seed: int, *stream_ids: int | str) -> np.random.Generator:
    """PCG64 generator for the stream ``(seed, *stream_ids)``."""
    sequence = np.random.SeedSequence(
        entropy=seed & _MASK64,
        spawn_key=tuple(_stream_word(s) for s in stream_ids),
    )
    return np.random.Generator(np.random.PCG64(sequence))


def derive_seed(seed: int, *stream_ids: int | str) -> int:
    """64-bit seed for a child stream (usable wherever a seed is expected)."""
    return int(generator(seed, *stream_ids).integers(0, 1 << 63))
