"""Seed derivation: every random stream is keyed by (seed, purpose tag, index)."""

import zlib

import numpy as np


def tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def derive_rng(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent generator for job ``index`` of purpose ``tag``.

    Streams depend only on their key, so serial and parallel runs agree.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag_key(tag), int(index)))
    return np.random.default_rng(ss)


def derive_seed(seed: int, tag: str, index: int = 0) -> int:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag_key(tag), int(index)))
    return int(ss.generate_state(1, dtype=np.uint32)[0])
