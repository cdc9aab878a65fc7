"""Deterministic RNG substreams for replication loops.

Every replication (or batch) derives its own generator from the master
seed plus its index, so results are identical no matter how work is
split across workers: worker count changes who computes a substream,
never what the substream produces.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *indices: int) -> np.random.Generator:
    """Generator keyed by (seed, *indices).

    Uses the seed-sequence spawning entropy of numpy so distinct index
    tuples give statistically independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, indices)]))
