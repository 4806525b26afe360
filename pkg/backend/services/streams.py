"""Counter-based random substreams.

Every block of simulated shots and every bootstrap resample draws from its own
Philox stream keyed by the run seed, so results never depend on how work is
spread over threads.
"""

from typing import Sequence

import numpy as np


def substream(seed: int, index: int) -> np.random.Generator:
    """Generator for block (or resample) `index` of the run keyed by `seed`"""
    if seed < 0 or index < 0:
        raise ValueError("seed and substream index must be non-negative")
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, index, 0]))


def derived_seed(seed: int, path: Sequence[int]) -> int:
    """Stable child seed for nested runs (e.g. one sweep point)"""
    state = np.random.SeedSequence([seed, *path]).generate_state(2, dtype=np.uint64)
    return int(state[0]) << 64 | int(state[1])
