"""Named random streams and per-trial seed derivation.

Every source of randomness draws from its own stream so that changing how
often one consumer draws never perturbs another. Streams are derived with
``numpy.random.SeedSequence`` using a fixed spawn key per stream name.
"""

import hashlib

import numpy as np

STREAMS = {"data": 0, "split": 1, "mix": 2, "random": 3, "test": 4}


def stream(seed: int, name: str) -> np.random.Generator:
    """Return the generator for stream ``name`` under ``seed``."""
    try:
        key = STREAMS[name]
    except KeyError:
        raise ValueError(f"unknown random stream {name!r}") from None
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key,)))


def trial_seed(master_seed: int, trial_index: int) -> int:
    """First 8 bytes (big-endian) of sha256("<master>:<trial>").

    Adding trials never changes the seeds of earlier ones.
    """
    digest = hashlib.sha256(f"{int(master_seed)}:{int(trial_index)}".encode()).digest()
    return int.from_bytes(digest[:8], "big")
