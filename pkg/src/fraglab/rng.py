"""Named, counter-derived random substreams.

Every consumer of randomness asks for a stream by name (and optionally an
index, e.g. the Monte Carlo replication number). Streams are derived from the
master seed through ``SeedSequence`` spawn keys, so two streams never overlap
and a replication's draws do not depend on how many other replications ran or
in what order.
"""

from __future__ import annotations

import numpy as np

STREAMS = {
    "exposure": 0,
    "noise": 1,
    "assignment": 2,
    "strata": 3,
    "preference": 4,
    "fragment-ids": 5,
    "mc-rep": 6,
    "mixed": 7,
    "pilot": 8,
    "fixtures": 9,
}

_U64 = (1 << 64) - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if seed < 0 or seed > _U64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def substream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Return an independent generator for stream ``name`` (and ``index``)."""
    try:
        key = STREAMS[name]
    except KeyError:
        raise KeyError(f"unknown random stream {name!r}") from None
    ss = np.random.SeedSequence(entropy=check_seed(seed), spawn_key=(key, *map(int, index)))
    return np.random.Generator(np.random.Philox(ss))
