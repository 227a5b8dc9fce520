import zlib

import numpy as np


def derive_rng(seed: int, *names: str) -> np.random.Generator:
    """Generator for one pipeline stage, derived from the root seed and a stage name.

    The same (seed, names) always yields the same stream, independent of which
    other stages ran before.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    keys = [zlib.crc32(name.encode("utf-8")) for name in names]
    return np.random.default_rng(np.random.SeedSequence([int(seed), *keys]))
