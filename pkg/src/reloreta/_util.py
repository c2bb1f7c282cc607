"""Shared helpers: deterministic seed derivation."""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def entropy_words(*parts) -> list[int]:
    """Map a mixed tuple of ints/strings to nonnegative 64-bit entropy words.

    Strings are hashed so labels like a method name can key a stream.
    """
    words = []
    for p in parts:
        if isinstance(p, str):
            digest = hashlib.sha256(p.encode("utf-8")).digest()
            words.append(int.from_bytes(digest[:8], "little"))
        elif isinstance(p, (int, np.integer)):
            words.append(int(p) & _MASK64)
        else:
            raise TypeError(f"cannot derive entropy from {type(p).__name__}")
    return words


def seeded_rng(*parts) -> np.random.Generator:
    """Generator whose stream is a pure function of the given key parts."""
    return np.random.default_rng(np.random.SeedSequence(entropy_words(*parts)))


def seed_sequence(*parts) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy_words(*parts))
