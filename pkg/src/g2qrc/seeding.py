"""Deterministic RNG derivation: (root seed, purpose tag, index) -> Generator."""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_entropy(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode()).digest()[:8], "big")


def derive_rng(root_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent, reproducible stream for one purpose and index."""
    ss = np.random.SeedSequence(entropy=(int(root_seed), _tag_entropy(tag), int(index)))
    return np.random.default_rng(ss)
