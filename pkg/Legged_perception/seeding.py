"""Seeded generator hierarchy.

Every consumer of randomness asks for a named substream of the run seed, so switching one
component on or off (a camera, the VIO source) leaves the draws of all others untouched.
"""
import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name`` under ``seed``; stable across processes."""
    key = zlib.crc32(name.encode('utf-8'))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))
