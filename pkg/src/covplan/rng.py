"""Named random streams derived from one 64-bit seed."""

import random
import zlib

import numpy as np

STREAMS = ("object", "init", "explore", "tiebreak")


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name``; same (seed, name) gives the same stream."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), key]))


def streams(seed: int) -> dict[str, np.random.Generator]:
    return {name: stream(seed, name) for name in STREAMS}


def py_stream(seed: int, name: str) -> random.Random:
    """Stdlib generator for hot loops, seeded from the same named stream."""
    key = zlib.crc32(name.encode("utf-8"))
    state = np.random.SeedSequence([int(seed) & (2**64 - 1), key]).generate_state(2, np.uint64)
    return random.Random(int(state[0]) << 64 | int(state[1]))
