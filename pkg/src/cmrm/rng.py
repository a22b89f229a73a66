"""Named, reproducible random substreams derived from a single run seed."""

import zlib

import numpy as np

# Every source of randomness in a run draws from one of these substreams so
# that adding/removing one consumer never perturbs the others.
STREAMS = ("init", "shuffle", "noise", "verify", "split", "synth")


def substream(seed: int, name: str) -> np.random.Generator:
    """Return an independent generator for (seed, name).

    The stream key is derived from the name by CRC32, so the mapping is
    stable across processes and platforms.
    """
    if name not in STREAMS:
        raise ValueError(f"unknown stream name: {name!r}")
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())])
