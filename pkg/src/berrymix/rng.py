"""Counter-based random streams keyed by (root seed, stream, path).

Each path gets its own Philox generator, so the values drawn for a path never
depend on how paths are split across workers.
"""

import numpy as np


def path_generator(root_seed, path_index, stream=0):
    ss = np.random.SeedSequence(int(root_seed), spawn_key=(int(stream), int(path_index)))
    return np.random.Generator(np.random.Philox(ss))


def stream_id(*parts):
    """Deterministic 32-bit stream id from small integers/strings."""
    h = 2166136261
    for part in parts:
        for byte in str(part).encode():
            h = ((h ^ byte) * 16777619) & 0xFFFFFFFF
        h = ((h ^ 0x2C) * 16777619) & 0xFFFFFFFF
    return h
