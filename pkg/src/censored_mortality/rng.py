"""Counter-based random streams keyed by (seed, purpose, block).

Each block of patients draws from its own Philox stream whose key is fixed by
the master seed, a stream tag and the block index. A block's draws therefore do
not depend on which worker simulates it or in what order.
"""
from __future__ import annotations

import numpy as np

BLOCK_SIZE = 4096

# stream tags
MAIN_COHORT = 1
INFLOW = 2
INFLOW_SCHEDULE = 3

_MASK64 = (1 << 64) - 1


def block_generator(seed: int, tag: int, block: int) -> np.random.Generator:
    if not 0 <= block < (1 << 40) or not 0 <= tag < (1 << 20):
        raise ValueError("block or tag out of range")
    key = np.array([seed & _MASK64, (tag << 40) | block], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def block_ranges(n: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    return [(lo, min(lo + block_size, n)) for lo in range(0, n, block_size)]
