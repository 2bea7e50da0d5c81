"""Reproducible random streams.

Every replicate, sweep cell and checker trial draws from its own stream,
identified by a 64-bit seed and a stream index.  Streams are built from
``numpy.random.SeedSequence`` with the stream index as spawn key, so they are
statistically independent and do not depend on how work is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["RngStream", "as_generator"]

_SEED_MASK = (1 << 64) - 1


@dataclass
class RngStream:
    """A named PCG64 stream.

    Identical ``(seed, stream)`` pairs yield identical draw sequences on every
    platform (PCG64 and SeedSequence are fully specified).
    """

    seed: int
    stream: int = 0
    path: tuple = ()
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.stream < 0:
            raise ValueError("stream id must be non-negative")
        self.seed = int(self.seed) & _SEED_MASK

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=(int(self.stream), *self.path))
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def child(self, index: int) -> "RngStream":
        """Sub-stream ``index`` of this stream (for replicates inside a cell)."""
        return RngStream(self.seed, self.stream, (*self.path, int(index)))


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, a Generator, or an integer seed."""
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None or isinstance(rng, (int, np.integer)):
        return RngStream(0 if rng is None else int(rng)).generator
    raise TypeError(f"cannot build a random generator from {type(rng).__name__}")
