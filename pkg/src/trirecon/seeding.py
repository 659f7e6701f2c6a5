"""Deterministic seed derivation: every random quantity traces to a master seed."""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(master_seed: int, *tags) -> int:
    """Stable 63-bit child seed from a master seed and a tag path."""
    h = zlib.crc32(repr((int(master_seed),) + tuple(tags)).encode())
    mix = np.random.SeedSequence([int(master_seed), h]).generate_state(2)
    return int(mix[0]) << 31 ^ int(mix[1])


def derive_rng(master_seed: int, *tags) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, *tags))
