"""Deterministic RNG plumbing.

Every stochastic operation in this package takes an explicit seed and maps it
to a counter-based Philox generator, so results are bit-reproducible across
runs and independent of execution order.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1

SeedLike = "int | np.random.SeedSequence"


def rng_from(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Return a Philox-backed generator for an integer seed or SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed) & _MASK64)))


def derive(master: int, *parts: int | str) -> np.random.SeedSequence:
    """Child SeedSequence for a labelled sub-task.

    The label parts (ints or strings) are folded into the entropy, so each
    (master seed, label) pair gets an independent stream regardless of how
    many other streams were derived before it.
    """
    entropy = [int(master) & _MASK64]
    for part in parts:
        if isinstance(part, str):
            digest = hashlib.sha256(part.encode("utf-8")).digest()
            entropy.append(int.from_bytes(digest[:8], "little"))
        else:
            entropy.append(int(part) & _MASK64)
    return np.random.SeedSequence(entropy)


def derived_rng(master: int, *parts: int | str) -> np.random.Generator:
    return rng_from(derive(master, *parts))


def as_rng(seed) -> np.random.Generator:
    """Pass a Generator through unchanged; build one from anything else."""
    if isinstance(seed, np.random.Generator):
        return seed
    return rng_from(seed)


def seed_fingerprint(seed: int | np.random.SeedSequence) -> int:
    """Stable integer id for logging which stream produced a result."""
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1)[0])
    return int(seed) & _MASK64
