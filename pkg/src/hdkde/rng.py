"""Counter-based random streams.

Every independent work unit (a trial, a dataset resample, a query point)
gets its own Philox generator keyed by ``(seed, tag, index...)`` through
``numpy.random.SeedSequence``. Results therefore do not depend on how the
units are scheduled across threads.
"""

from __future__ import annotations

import numpy as np


def generator(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for the unit identified by ``key`` under ``seed``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed!r}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))
