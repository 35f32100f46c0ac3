"""Deterministic RNG stream derivation.

Every experiment derives all of its randomness from one master seed.
Independent subsystems (init, shuffling, forward noise, ensemble members,
Monte-Carlo workers) get their own named child streams so that adding a
consumer in one place never shifts the draws of another, and so parallel
execution over members/workers reproduces the sequential results exactly.
"""

import zlib

import numpy as np

__all__ = ["derive_rng", "derive_seed_sequence", "as_rng"]


def _key_part(part):
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream key parts must be nonnegative")
        return int(part)
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"unsupported stream key part: {part!r}")


def derive_seed_sequence(master_seed, *path):
    """SeedSequence for the child stream named by `path` (ints or strings)."""
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(_key_part(p) for p in path))


def derive_rng(master_seed, *path):
    """Generator for the child stream named by `path`."""
    return np.random.default_rng(derive_seed_sequence(master_seed, *path))


def as_rng(seed_or_rng):
    """Pass a Generator through, or build one from an integer seed."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)
