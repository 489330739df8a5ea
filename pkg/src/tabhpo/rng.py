"""Child random streams derived from one master seed.

Every stochastic component asks for a stream keyed by ``(seed, *keys)``.
Keys may be ints or strings; strings are hashed with a stable digest so the
derivation never depends on ``PYTHONHASHSEED`` or on call order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"stream keys must be non-negative, got {key}")
        return int(key)
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Return a generator seeded from ``seed`` and the spawn path ``keys``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return np.random.default_rng(seq)


def derive_seed(seed: int, *keys) -> int:
    """Integer seed for APIs that want a plain int rather than a Generator."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
