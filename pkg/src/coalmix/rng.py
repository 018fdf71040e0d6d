"""Reproducible random-stream derivation.

One 64-bit master seed identifies a whole experiment.  Every unit of work
(gene, sweep cell, replicate) draws from its own stream derived from the
master seed and the unit's integer coordinates, so results do not depend on
evaluation order or worker count.
"""

from __future__ import annotations

import numpy as np

SeedLike = int | np.random.SeedSequence | np.random.Generator


def derive_seed(master: int, *path: int) -> np.random.SeedSequence:
    """Seed sequence for the stream addressed by (master, *path)."""
    return np.random.SeedSequence(entropy=master, spawn_key=tuple(path))


def derive_rng(master: int, *path: int) -> np.random.Generator:
    """Generator for the stream addressed by (master, *path)."""
    return np.random.default_rng(derive_seed(master, *path))


def as_rng(seed: SeedLike) -> np.random.Generator:
    """Coerce an int seed, SeedSequence, or Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
