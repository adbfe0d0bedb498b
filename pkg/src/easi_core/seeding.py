"""Named random streams derived from a single user seed.

``stream_seed(seed, name)`` is stable across platforms and releases: it feeds the
user seed and the CRC-32 of the stream name into a numpy ``SeedSequence`` and
takes the first 63-bit word of its state.
"""

import zlib

import numpy as np

from .exceptions import ArgumentError

STREAMS = ("data", "rp", "easi-init", "mlp")


def stream_seed(seed: int, name: str) -> int:
    """Derive the integer seed of stream ``name`` from the global ``seed``."""
    if seed < 0:
        raise ArgumentError("seed must be non-negative")
    sequence = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode("utf-8"))])
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def stream_rng(seed: int, name: str) -> np.random.Generator:
    """Generator for stream ``name``."""
    return make_rng(stream_seed(seed, name))


def make_rng(seed: int) -> np.random.Generator:
    """Generator used by every component that receives an already-split seed."""
    return np.random.Generator(np.random.PCG64(seed))
