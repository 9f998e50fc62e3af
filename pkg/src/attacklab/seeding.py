"""Deterministic seed derivation shared by environments, learners and the harness.

Every stochastic component takes an explicit integer seed.  Child seeds are
derived through ``numpy.random.SeedSequence`` so that independent streams
(episodes, seeds-within-a-run, parameter init) never alias each other.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *branch: int) -> int:
    """Return a child seed for a labelled branch of ``seed``.

    Stable across processes and platforms; the same (seed, branch) pair always
    yields the same child.
    """
    entropy = [seed & _MASK64] + [b & _MASK64 for b in branch]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def generator(seed: int, *branch: int) -> np.random.Generator:
    """A PCG64 generator for the given seed (optionally branched)."""
    if branch:
        seed = derive_seed(seed, *branch)
    return np.random.Generator(np.random.PCG64(seed & _MASK64))


def splitmix64(x: int) -> int:
    """One round of the splitmix64 mix; used for cheap stable per-index hashes."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64
