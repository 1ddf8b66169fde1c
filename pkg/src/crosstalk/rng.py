"""Deterministic, splittable random number streams.

Every stochastic decision in the package (parameter init, scene synthesis,
augmentation, context sampling, epoch shuffling) draws from a Philox
counter-based generator keyed by the run seed plus an integer stream path.
Streams with different paths are statistically independent, and the same
(seed, path) always reproduces the same draws regardless of platform or of
how many other streams were consumed first.
"""

from __future__ import annotations

import numpy as np

# Stream namespaces. Keeping them in one table avoids accidental collisions
# between subsystems that derive streams from the same run seed.
STREAM_INIT = 1
STREAM_SCENE = 2
STREAM_CONTEXT = 3
STREAM_AUGMENT = 4
STREAM_SHUFFLE = 5
STREAM_EVAL = 6


def make_rng(seed: int, *path: int) -> np.random.Generator:
    """Return a Philox generator for the stream identified by (seed, *path)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
