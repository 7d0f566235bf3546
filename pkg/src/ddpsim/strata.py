"""Length-stratified corpus partitioning and proportional batch allocation.

A corpus is split into strata by token length (stratum k holds lengths in
(boundaries[k-1], boundaries[k]], counting from 1 at the shortest bin) and
batches are drawn by apportioning the local batch size over the strata in
proportion to their empirical probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .seqdata import DEFAULT_BIN_BOUNDARIES, Sample

DEFAULT_STRATUM_BOUNDARIES = DEFAULT_BIN_BOUNDARIES


@dataclass
class Strata:
    """Stratified sample pools.

    ``buckets`` are the per-stratum pools that draw_batch consumes; ``probs``
    are the empirical stratum probabilities at construction time.  Draws
    mutate the pools, so concurrent callers must serialize draws on one
    instance; distinct instances are independent.
    """

    boundaries: tuple[int, ...]
    buckets: list[list[Sample]]
    probs: tuple[float, ...]

    @property
    def num_strata(self) -> int:
        return len(self.boundaries)

    @property
    def remaining(self) -> int:
        return sum(len(pool) for pool in self.buckets)


@dataclass(frozen=True)
class StratumAllocation:
    """Per-stratum sample counts for one local batch."""

    counts: tuple[int, ...]
    local_batch: int

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise ValueError(f"counts must be non-negative, got {self.counts}")
        if sum(self.counts) != self.local_batch:
            raise ValueError(
                f"counts {self.counts} sum to {sum(self.counts)}, "
                f"expected local_batch {self.local_batch}"
            )


def stratify(samples: Sequence[Sample], boundaries=DEFAULT_STRATUM_BOUNDARIES) -> Strata:
    """Partition samples into strata by length, preserving input order.

    Raises if any sample is longer than the last boundary.
    """
    bounds = tuple(int(b) for b in boundaries)
    if not bounds or bounds[0] < 1 or any(a >= b for a, b in zip(bounds, bounds[1:])):
        raise ValueError(f"boundaries must be non-empty, ascending, >= 1: {bounds}")
    if not samples:
        raise ValueError("cannot stratify an empty corpus")
    buckets: list[list[Sample]] = [[] for _ in bounds]
    bound_arr = np.asarray(bounds)
    for s in samples:
        k = int(np.searchsorted(bound_arr, s.length, side="left"))
        if k == len(bounds):
            raise ValueError(
                f"sample id {s.id} has length {s.length}, "
                f"beyond the last stratum boundary {bounds[-1]}"
            )
        buckets[k].append(s)
    total = len(samples)
    probs = tuple(len(pool) / total for pool in buckets)
    return Strata(boundaries=bounds, buckets=buckets, probs=probs)


def allocate_counts(probs: Sequence[float], local_batch: int) -> StratumAllocation:
    """Apportion ``local_batch`` over strata by largest remainder.

    Quotas are local_batch * p / sum(p); each stratum gets the floor of its
    quota and the leftover units go to the largest fractional remainders,
    ties broken toward the lower stratum index.  Every count therefore
    differs from its exact quota by less than one.
    """
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probs must be a non-empty 1-D sequence")
    if (p < 0).any():
        raise ValueError(f"negative probability in {probs}")
    if local_batch < 0:
        raise ValueError(f"local_batch must be >= 0, got {local_batch}")
    total = p.sum()
    if total <= 0:
        raise ValueError("probabilities sum to zero")
    quotas = local_batch * p / total
    counts = np.floor(quotas).astype(int)
    leftover = local_batch - int(counts.sum())
    if leftover:
        order = np.argsort(-(quotas - counts), kind="stable")
        counts[order[:leftover]] += 1
    return StratumAllocation(tuple(int(c) for c in counts), local_batch)


def draw_batch(strata: Strata, alloc: StratumAllocation, seed: int) -> list[Sample]:
    """Draw alloc.counts[k] samples without replacement from each stratum.

    Pools shrink across calls, so repeated draws walk an epoch.  When a
    stratum runs dry the shortfall is borrowed from the nonempty stratum
    with the closest boundary, keeping the batch size fixed; only global
    exhaustion raises, naming the stratum that triggered it.
    """
    if len(alloc.counts) != strata.num_strata:
        raise ValueError(
            f"allocation has {len(alloc.counts)} strata, corpus has {strata.num_strata}"
        )
    rng = np.random.default_rng(seed)
    drawn: list[Sample] = []
    for k, need in enumerate(alloc.counts):
        take = min(need, len(strata.buckets[k]))
        _draw_from_pool(rng, strata.buckets[k], take, drawn)
        shortfall = need - take
        while shortfall > 0:
            j = _closest_nonempty(strata, k)
            if j is None:
                raise ValueError(
                    f"stratum {k + 1} exhausted and no other stratum can cover "
                    f"the remaining {shortfall} sample(s)"
                )
            take = min(shortfall, len(strata.buckets[j]))
            _draw_from_pool(rng, strata.buckets[j], take, drawn)
            shortfall -= take
    return drawn


def _draw_from_pool(rng, pool: list[Sample], take: int, out: list[Sample]) -> None:
    if take == 0:
        return
    picked = rng.choice(len(pool), size=take, replace=False)
    # swap-pop from the back so earlier indices stay valid
    for i in sorted((int(i) for i in picked), reverse=True):
        out.append(pool[i])
        pool[i] = pool[-1]
        pool.pop()


def _closest_nonempty(strata: Strata, k: int) -> int | None:
    candidates = [
        (abs(strata.boundaries[j] - strata.boundaries[k]), j)
        for j in range(strata.num_strata)
        if j != k and strata.buckets[j]
    ]
    return min(candidates)[1] if candidates else None
