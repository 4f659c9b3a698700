"""Reproducible random-number streams.

All randomness in the package flows through the counter-based Philox
generator.  A master seed owns a tree of child streams: replicas, probe
loops, and diagnostics each get their own branch via ``SeedSequence.spawn``,
so results are independent of execution order and thread count.
"""

from __future__ import annotations

import numpy as np


def chain_rng(seed: int) -> np.random.Generator:
    """Generator for a single chain or diagnostic keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def split_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """``n`` independent generators derived from one master seed.

    Child ``i`` is fully determined by ``(seed, i)``; drawing from one child
    never perturbs another, which is what makes replica-parallel runs
    byte-reproducible regardless of scheduling.
    """
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.Philox(s)) for s in children]


def subseed(seed: int, index: int) -> int:
    """Stable 63-bit subseed for branch ``index`` of ``seed``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
