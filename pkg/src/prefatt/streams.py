"""Seeded random streams and ordered replica execution."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, TypeVar

import numpy as np

T = TypeVar("T")

DEFAULT_SEED = 20240601


@dataclass(frozen=True)
class Stream:
    """Random stream for replica ``replica`` of master seed ``seed``.

    ``key()`` gives the Philox key for the per-vertex counter generator and
    ``generator()`` a numpy Philox generator for bulk sampling. Both derive
    from ``SeedSequence([seed, replica])``.
    """

    seed: int
    replica: int = 0

    def _sequence(self, purpose: int) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.seed, self.replica, purpose])

    def key(self) -> tuple[np.uint64, np.uint64]:
        k0, k1 = self._sequence(0).generate_state(2, np.uint64)
        return np.uint64(k0), np.uint64(k1)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self._sequence(1)))

    def spawn(self, replica: int) -> "Stream":
        return Stream(self.seed, replica)


def as_stream(rng) -> Stream:
    if isinstance(rng, Stream):
        return rng
    if rng is None:
        return Stream(DEFAULT_SEED)
    if isinstance(rng, (int, np.integer)):
        return Stream(int(rng))
    raise TypeError("rng must be a Stream, an integer seed or None")


def run_replicas(
    fn: Callable[[Stream], T], seed: int, replicas: int, threads: int | None = None
) -> list[T]:
    """Evaluate ``fn`` on replica streams 0..replicas-1, results in index order.

    The compiled kernels release the GIL, so threads give real parallelism.
    """
    streams = [Stream(seed, r) for r in range(replicas)]
    threads = threads or os.cpu_count() or 1
    if threads <= 1 or replicas <= 1:
        return [fn(s) for s in streams]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, streams))
