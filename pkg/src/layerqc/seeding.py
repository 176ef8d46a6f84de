"""Named RNG substreams so every random draw is reproducible from one seed.

Each consumer of randomness gets its own stream keyed by (seed, stream id,
extra indices). Streams are independent of the order in which they are
created, which keeps template growth, run batches, and resumed sweeps
deterministic.
"""
from __future__ import annotations

import numpy as np

# Stream ids. Never renumber: recorded runs depend on them.
LAYER = 0
ENFORCE = 1
SHUFFLE = 2
SHOTS = 3
PARAM_INIT = 4
SPLIT = 5
RUN = 6
SCAN = 7


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream identified by integer key components."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))
