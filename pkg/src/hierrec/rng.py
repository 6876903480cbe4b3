"""Named random substreams derived from one global seed.

Every source of randomness (data generation, parameter init, rollouts,
evaluation) draws from its own named stream so that changing one phase
never perturbs another.
"""

import hashlib

import numpy as np


def substream(seed: int, *names) -> np.random.Generator:
    """Generator for the (seed, names...) stream; stable across runs and platforms."""
    tag = "/".join(str(n) for n in names)
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    spawn_key = tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key))
