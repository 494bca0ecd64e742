"""Deterministic random streams.

All randomness in the package flows from one user-visible integer seed.
Streams are built on the counter-based Philox generator so the same
(seed, stream) pair yields the same draws on every platform.
"""

import numpy as np

# Stream labels keep independent consumers of one seed from colliding.
STREAM_SCENE = 0x5CE17E
STREAM_NOISE = 0x4015E
STREAM_MODEL = 0x30DE1
STREAM_EPOCH = 0xE60C4
STREAM_CHECK = 0xC4EC7


def stream_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for an independent stream derived from (seed, stream)."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
