"""Named deterministic RNG substreams.

A master seed fans out into independent streams keyed by a string tag, so
individual pieces of a workflow (one restart, one study run) can be re-run
in isolation without replaying the draws that preceded them.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "subseed"]


def _sequence(seed: int, tag: str) -> np.random.SeedSequence:
    key = zlib.crc32(tag.encode("utf-8"))
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(key,))


def substream(seed: int, tag: str) -> np.random.Generator:
    """Generator for the stream named ``tag`` under the master ``seed``."""
    return np.random.default_rng(_sequence(seed, tag))


def subseed(seed: int, tag: str) -> int:
    """Derived integer seed for APIs that accept only a plain seed."""
    return int(_sequence(seed, tag).generate_state(1, np.uint64)[0])
