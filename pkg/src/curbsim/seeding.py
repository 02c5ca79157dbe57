"""Deterministic RNG substream derivation.

Every stochastic operation takes an explicit numpy Generator. Parallel
or per-story work derives independent substreams from a root seed plus
stable integer keys, so results never depend on iteration order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def key_for(label: str) -> int:
    """Stable 64-bit key for a string label (platform independent)."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_rng(seed: int, *keys: int | str) -> np.random.Generator:
    """Independent generator for (seed, keys); order of derivation calls is irrelevant."""
    resolved = [seed] + [key_for(k) if isinstance(k, str) else int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(resolved))
