"""Seeded random number generation.

All randomness in the package flows through :func:`make_rng` so that a
64-bit seed fully determines every downstream draw. Per-record generators
(:func:`record_rng`) are derived with spawn keys, which keeps parallel and
serial generation bit-identical regardless of worker scheduling.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Return a deterministic generator for a 64-bit integer seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def record_rng(seed: int, index: int) -> np.random.Generator:
    """Return the generator for record `index` of a dataset seeded with `seed`.

    Independent of how records are grouped into batches or workers.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    return np.random.Generator(np.random.PCG64(ss))
