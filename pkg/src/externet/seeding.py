"""Deterministic derived random streams.

Per-trial generators are derived as SeedSequence([root, *parts]) so trials
can run in any order (or in parallel) and still reproduce bit-identically.
"""

from __future__ import annotations

import numpy as np

__all__ = ["spawn_rng", "spawn_seed"]


def spawn_seed(root: int, *parts: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(root), *(int(p) for p in parts)])


def spawn_rng(root: int, *parts: int) -> np.random.Generator:
    return np.random.default_rng(spawn_seed(root, *parts))
