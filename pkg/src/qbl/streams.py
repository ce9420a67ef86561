"""Named, independent random streams derived from a single root seed."""
from __future__ import annotations

import numpy as np

# Stable stream identifiers; never renumber, it would change every sample path.
STREAM_IDS = {
    "environment": 0,
    "policy": 1,
    "analysis": 2,
}


def stream(seed: int, name: str) -> np.random.Generator:
    """Return a Philox generator keyed on ``(seed, name)``.

    Streams for different names never share state, so drawing more numbers
    from the policy stream leaves the environment's sample path untouched.
    """
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(STREAM_IDS[name],))
    return np.random.Generator(np.random.Philox(ss))
