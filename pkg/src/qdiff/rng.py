"""Named, reproducible random streams derived from one master seed."""
from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("data", "init", "train", "diffusion", "generation", "qnn")


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Generator for ``name`` under master ``seed``; ``extra`` ints sub-key it further.

    Streams are independent of each other and of call order.
    """
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())] + [int(e) for e in extra]
    return np.random.default_rng(np.random.SeedSequence(key))
