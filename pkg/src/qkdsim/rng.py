"""Named, independent random streams derived from one root seed.

Each party (source, Alice, Bob, Eve, channel, public discussion) draws from
its own generator so that switching an adversary on or off does not shift
the honest parties' draws.
"""
from __future__ import annotations

import numpy as np

# Stable integer ids; never reorder, only append.
STREAM_IDS = {
    "source": 0,
    "alice": 1,
    "bob": 2,
    "eve": 3,
    "channel": 4,
    "public": 5,
    "postprocess": 6,
}


class Streams:
    """Lazily created generators keyed by stream name.

    Parameters
    ----------
    seed : int
        Root seed. Wall-clock seeding is deliberately unsupported.
    trial : int
        Trial index; distinct trials get disjoint streams.
    """

    def __init__(self, seed: int, trial: int = 0) -> None:
        if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool) or seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {seed!r}")
        self.seed = int(seed)
        self.trial = int(trial)
        self._cache: dict[str, np.random.Generator] = {}

    def __getitem__(self, name: str) -> np.random.Generator:
        if name not in STREAM_IDS:
            raise KeyError(f"unknown stream {name!r}")
        gen = self._cache.get(name)
        if gen is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=(self.trial, STREAM_IDS[name]))
            gen = np.random.Generator(np.random.PCG64(ss))
            self._cache[name] = gen
        return gen

    # attribute sugar: streams.alice, streams.eve, ...
    def __getattr__(self, name: str) -> np.random.Generator:
        if name.startswith("_") or name not in STREAM_IDS:
            raise AttributeError(name)
        return self[name]
