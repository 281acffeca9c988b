"""Reproducible Monte Carlo plumbing.

Trials are laid out in fixed blocks of ``BLOCK_SIZE``. Block ``b`` draws from
a Philox stream keyed by the seed with the block index in the high counter
word, so trial ``t`` always sees the same random numbers whatever the worker
count, and results are reduced in block order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, List, TypeVar

import numpy as np

from aeptools.entropy import Distribution
from aeptools.errors import DomainError

BLOCK_SIZE = 1024
Z95 = NormalDist().inv_cdf(0.975)

T = TypeVar("T")


def block_generator(seed: int, block: int) -> np.random.Generator:
    key = int(seed) & ((1 << 64) - 1)
    bit_gen = np.random.Philox(key=key, counter=[0, 0, 0, block])
    return np.random.Generator(bit_gen)


def map_blocks(
    trials: int,
    seed: int,
    fn: Callable[[np.random.Generator, int], T],
    threads: int = 1,
) -> List[T]:
    """Run ``fn(rng, block_trials)`` per block; results come back in block order."""
    if trials < 1:
        raise DomainError("trials must be >= 1")
    sizes = [min(BLOCK_SIZE, trials - start) for start in range(0, trials, BLOCK_SIZE)]

    def job(b):
        return fn(block_generator(seed, b), sizes[b])

    if threads <= 1 or len(sizes) == 1:
        return [job(b) for b in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(job, range(len(sizes))))


def sample_letters(d: Distribution, n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` i.i.d. sequences of length ``n``; zero-probability letters never appear."""
    support = d.support
    cdf = np.cumsum(d.probs[support])
    cdf[-1] = 1.0
    u = rng.random((m, n))
    idx = np.searchsorted(cdf, u, side="right")
    np.minimum(idx, support.size - 1, out=idx)
    return support[idx].astype(np.int16 if d.size < 2**15 else np.int64)


def sample_counts(d: Distribution, n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Letter compositions of ``m`` sampled sequences (the sequences themselves are discarded)."""
    letters = sample_letters(d, n, m, rng)
    out = np.empty((m, d.size), dtype=np.int64)
    for letter in range(d.size):
        out[:, letter] = np.count_nonzero(letters == letter, axis=1)
    return out


def wilson_interval(successes: int, trials: int, z: float = Z95):
    if trials < 1:
        raise DomainError("trials must be >= 1")
    phat = successes / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, min(centre - half, phat)), min(1.0, max(centre + half, phat))


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    trials: int
    seed: int
    ci_low: float
    ci_high: float
    successes: int
    params: dict = field(default_factory=dict)

    @classmethod
    def from_counts(cls, successes: int, trials: int, seed: int, params=None, **extra):
        lo, hi = wilson_interval(successes, trials)
        return cls(
            estimate=successes / trials,
            trials=trials,
            seed=seed,
            ci_low=lo,
            ci_high=hi,
            successes=successes,
            params=dict(params or {}),
            **extra,
        )

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "params"}
        out["params"] = dict(self.params)
        out["method"] = "monte-carlo"
        return out
