"""Deterministic seed derivation.

One master seed drives every random stream in the package. Substream seeds
are derived by hashing ``(master, *parts)`` with SHA-256 and taking the first
8 bytes, so the same (master, phase, replicate, block) tuple always yields the
same 64-bit seed regardless of worker layout or platform.
"""
import hashlib

import numpy as np

__all__ = ["derive_seed", "rng_for"]


def derive_seed(master: int, *parts) -> int:
    """Return a 64-bit seed for the substream identified by ``parts``.

    ``parts`` may mix strings and integers; they are canonicalized into a
    single ASCII byte string before hashing.
    """
    token = repr((int(master),) + tuple(parts)).encode("ascii")
    digest = hashlib.sha256(token).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(master: int, *parts) -> np.random.Generator:
    """A PCG64 generator seeded from :func:`derive_seed`."""
    return np.random.Generator(np.random.PCG64(derive_seed(master, *parts)))
