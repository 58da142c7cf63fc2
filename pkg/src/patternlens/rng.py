"""Deterministic random number streams.

All randomness in the package flows through :class:`RngStream`, a thin
wrapper over a counter-based generator (Philox).  Counter-based generation
means a stream is a pure function of its seed: the same seed yields the
same sequence on every platform and in every process, which is what makes
whole experiment pipelines reproducible from a single config value.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """A named, seeded stream of random numbers.

    Two streams constructed with the same seed produce bit-identical
    sequences.  Independent substreams for different purposes (weight
    init, shuffling, baselines) are derived with :meth:`substream` so
    that consuming numbers for one purpose never perturbs another.
    """

    algorithm = "philox"

    def __init__(self, seed: int, _spawn_key: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = int(seed)
        self._spawn_key = _spawn_key
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=_spawn_key)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def substream(self, index: int) -> "RngStream":
        """Derive an independent stream identified by `index`."""
        return RngStream(self.seed, self._spawn_key + (int(index),))

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def random(self, size=None) -> np.ndarray:
        return self._gen.random(size)
