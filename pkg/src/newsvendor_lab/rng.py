"""Counter-based random streams, one per replication.

Each replication draws from a Philox generator whose key is derived from
``(master_seed, replication_index)`` alone, so a replication's sample path
never depends on how many workers ran or in which order.
"""

from __future__ import annotations

import numpy as np

MAX_SEED = 2**64 - 1


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValueError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must lie in [0, 2**64 - 1], got {seed}")
    return seed


def replication_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Generator for replication ``index`` under ``seed``.

    ``stream`` separates independent uses within one replication (e.g. the
    prior draw vs. the demand path in a Bayes-risk check).
    """
    ss = np.random.SeedSequence(entropy=check_seed(seed), spawn_key=(int(index), int(stream)))
    return np.random.Generator(np.random.Philox(ss))
