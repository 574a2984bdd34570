"""Keyed random streams.

Every random draw in the toolkit comes from a stream derived from a master
seed plus a tuple of keys (run index, purpose tag, ...), so results do not
depend on the order or process in which runs are executed.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key_word(key):
    if isinstance(key, str):
        return int.from_bytes(hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest(), "little")
    key = int(key)
    if key < 0:
        raise ValueError(f"stream keys must be non-negative, got {key}")
    return key


def seed_sequence(seed, *keys):
    return np.random.SeedSequence([_key_word(seed)] + [_key_word(k) for k in keys])


def stream(seed, *keys):
    """Return an independent Philox generator for ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *keys)))


def derive_seed(seed, *keys):
    """A 63-bit integer seed for ``(seed, *keys)``, suitable for logging."""
    return int(seed_sequence(seed, *keys).generate_state(1, np.uint64)[0]) & (_MASK64 >> 1)
