"""Named, splittable random streams.

Every stochastic routine in varac takes either an integer seed or a
``numpy.random.Generator``. Sub-streams are addressed by integer keys so that
adding a new consumer never shifts the draws seen by an existing one.
"""

from __future__ import annotations

import numpy as np

# stream tags used by the driver
STREAM_INIT = 0
STREAM_SAMPLE = 1
STREAM_NETS = 2


def make_rng(seed, *keys: int) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        if keys:
            raise TypeError("keys are only meaningful with an integer seed")
        return seed
    entropy = [int(seed), *(int(k) for k in keys)]
    if any(e < 0 for e in entropy):
        raise ValueError("seeds and stream keys must be non-negative")
    return np.random.default_rng(np.random.SeedSequence(entropy))
