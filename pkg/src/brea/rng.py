"""Seeded, counter-based random streams.

Every consumer gets its own Philox stream keyed by (master seed, round,
user, purpose), so changing one consumer never shifts another's draws.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    BATCH = 1
    QUANT = 2
    SHARES = 3
    ATTACK = 4
    DROPOUT = 5
    FEDAVG = 6
    DECODE = 7
    PLACEMENT = 8
    DATA = 9
    INIT = 10


def stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))
