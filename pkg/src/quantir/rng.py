"""Seed handling.

Every random draw in the toolkit comes from numpy's PCG64 generator.  A run
has one user-facing seed; independent consumers get their own sub-seed via
:func:`derive_seed`, and per-frame camera noise uses
``SeedSequence(entropy=seed, spawn_key=(frame_index,))`` so that frames can be
rendered in any order or in parallel with identical results.
"""
import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def derive_seed(seed, purpose):
    """Return a 64-bit sub-seed: first 8 bytes (little endian) of
    ``sha256(f"{seed}:{purpose}")``."""
    digest = hashlib.sha256(f"{int(seed)}:{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def generator(seed, purpose=None):
    if purpose is not None:
        seed = derive_seed(seed, purpose)
    return np.random.Generator(np.random.PCG64(int(seed) & SEED_MASK))


def frame_generator(seed, frame_index):
    ss = np.random.SeedSequence(entropy=int(seed) & SEED_MASK, spawn_key=(int(frame_index),))
    return np.random.Generator(np.random.PCG64(ss))
