"""Deterministic seed derivation.

Every source of randomness in the toolkit flows from a single 64-bit master
seed through named, registered purposes. Two different purposes (or the same
purpose at different indices) yield statistically independent generators, so
experiments are replayable component by component.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Registered purpose codes. Never renumber: artifact reproducibility depends
# on these values.
_PURPOSES = {
    "data_prototypes": 1,
    "data_points": 2,
    "model_init": 3,
    "train_shuffle": 4,
    "backdoor_inputs": 5,
    "backdoor_labels": 6,
    "commit_randomness": 7,
    "head_reinit": 8,
    "attack": 9,
    "trial": 10,
}


def subseed_sequence(master_seed: int, purpose: str, index: int = 0) -> np.random.SeedSequence:
    """Seed sequence for one named purpose under the master seed."""
    try:
        code = _PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unregistered seeding purpose: {purpose!r}") from None
    return np.random.SeedSequence((int(master_seed) & _MASK64, code, int(index)))


def rng_for(master_seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Generator for one named purpose under the master seed."""
    return np.random.default_rng(subseed_sequence(master_seed, purpose, index))
