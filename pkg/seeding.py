"""
Named random sub-streams derived from one top-level seed.

Every random draw in a run comes from `rng_for(seed, "stream", ...)`, so a run is
fully determined by its seed and the names of the streams it asks for.
"""
import zlib

import numpy as np


def _name_key(name) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name) & 0xFFFFFFFF
    return zlib.crc32(str(name).encode("utf-8"))


def seed_sequence(seed: int, *names) -> np.random.SeedSequence:
    """SeedSequence for the sub-stream `names` of `seed`."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_name_key(n) for n in names]
    return np.random.SeedSequence(entropy)


def rng_for(seed: int, *names) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, *names))


def child_seed(seed: int, *names) -> int:
    """Integer seed for APIs that take an int rather than a Generator."""
    return int(seed_sequence(seed, *names).generate_state(1, dtype=np.uint32)[0])
