"""Named, independent random streams derived from one master seed.

Each stage keys its stream by ``(stage, *counters)`` through
:class:`numpy.random.SeedSequence` spawn keys, so adding a stage or drawing
more from one stream never shifts another.
"""

import numpy as np

DATA = 0
SPLIT = 1
INIT = 2
LATENT = 3
LEARNER = 4
INFER = 5
VALID = 6
BATCH = 7
SWEEP = 8


def stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))))


def derive_seed(seed: int, *keys: int) -> int:
    """A 31-bit integer seed for libraries that take ``random_state=int``."""
    state = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)).generate_state(1)[0]
    return int(state) & 0x7FFFFFFF
