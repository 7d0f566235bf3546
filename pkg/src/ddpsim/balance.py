"""Batch-formation strategies and per-GPU sample assignments.

Four strategies are modeled: a round-robin baseline, global presorting
(sort the whole batch, deal across all GPUs), packing (concatenate short
sequences up to the length cap, deal packs), and local presorting (sort
only within each node, so no sample ever crosses a node boundary).
Sorted deals support two scan patterns: raster repeats left-to-right,
snake alternates direction each pass.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .seqdata import MAX_SEQ_LEN, Sample, Topology


class ScanPattern(str, Enum):
    RASTER = "raster"
    SNAKE = "snake"


@dataclass(frozen=True)
class Pack:
    """Samples sharing one model input; total_length <= the length cap."""

    members: tuple[Sample, ...]
    total_length: int

    def __post_init__(self):
        if not self.members:
            raise ValueError("a pack needs at least one member")
        if self.total_length != sum(s.length for s in self.members):
            raise ValueError("total_length does not match member lengths")


@dataclass
class Assignment:
    """Per-GPU ordered sample lists plus exact token totals."""

    per_gpu: list[list[Sample]]
    token_counts: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "per_gpu_ids": [[s.id for s in gpu] for gpu in self.per_gpu],
            "token_counts": list(self.token_counts),
        }


def _from_per_gpu(per_gpu: list[list[Sample]]) -> Assignment:
    counts = tuple(sum(s.length for s in gpu) for gpu in per_gpu)
    return Assignment(per_gpu=per_gpu, token_counts=counts)


def _deal(items: Sequence, num_lanes: int, scan: ScanPattern) -> list[list]:
    """Deal items across lanes row by row; snake reverses odd rows."""
    if len(items) % num_lanes:
        raise ValueError(f"{len(items)} items do not divide over {num_lanes} GPUs")
    lanes: list[list] = [[] for _ in range(num_lanes)]
    for r in range(len(items) // num_lanes):
        row = items[r * num_lanes : (r + 1) * num_lanes]
        if scan is ScanPattern.SNAKE and r % 2 == 1:
            row = row[::-1]
        for g, item in enumerate(row):
            lanes[g].append(item)
    return lanes


def _sorted_desc(samples: Sequence[Sample]) -> list[Sample]:
    # descending length, ties broken by id for determinism
    return sorted(samples, key=lambda s: (-s.length, s.id))


def assign_none(batch: Sequence[Sample], topo: Topology) -> Assignment:
    """Baseline: deal samples to GPUs round-robin in input order."""
    return _from_per_gpu(_deal(list(batch), topo.total_gpus, ScanPattern.RASTER))


def assign_global_presort(
    batch: Sequence[Sample], topo: Topology, scan: ScanPattern = ScanPattern.RASTER
) -> Assignment:
    """Sort the whole batch by descending length, then deal across all GPUs."""
    scan = ScanPattern(scan)
    return _from_per_gpu(_deal(_sorted_desc(batch), topo.total_gpus, scan))


def pack_corpus(
    samples: Sequence[Sample],
    pack_limit: int = 2,
    max_seq_len: int = MAX_SEQ_LEN,
) -> list[Pack]:
    """Greedy first-fit-decreasing packing.

    Repeatedly takes the longest unpacked sample and adds the longest
    remaining sample that still fits under ``max_seq_len``, up to
    ``pack_limit`` members.  Every sample lands in exactly one pack;
    singletons are always legal.
    """
    if pack_limit < 1:
        raise ValueError(f"pack_limit must be >= 1, got {pack_limit}")
    if max_seq_len < 1:
        raise ValueError(f"max_seq_len must be >= 1, got {max_seq_len}")
    too_long = next((s for s in samples if s.length > max_seq_len), None)
    if too_long is not None:
        raise ValueError(
            f"sample id {too_long.id} has length {too_long.length} > max_seq_len {max_seq_len}"
        )

    # per-length queues in ascending-id order; an int bitmask tracks which
    # lengths still have samples so "longest <= cap" is one bit_length scan
    by_length: list[deque[Sample]] = [deque() for _ in range(max_seq_len + 1)]
    for s in sorted(samples, key=lambda s: (s.length, s.id)):
        by_length[s.length].append(s)
    occupied = 0
    for length, q in enumerate(by_length):
        if q:
            occupied |= 1 << length

    def pop_longest_at_most(cap: int) -> Sample | None:
        nonlocal occupied
        mask = occupied & ((1 << (cap + 1)) - 1)
        if not mask:
            return None
        length = mask.bit_length() - 1
        q = by_length[length]
        s = q.popleft()
        if not q:
            occupied &= ~(1 << length)
        return s

    packs: list[Pack] = []
    while occupied:
        seed = pop_longest_at_most(max_seq_len)
        members = [seed]
        total = seed.length
        while len(members) < pack_limit:
            partner = pop_longest_at_most(max_seq_len - total)
            if partner is None:
                break
            members.append(partner)
            total += partner.length
        packs.append(Pack(tuple(members), total))
    return packs


def assign_packing(packs: Sequence[Pack], topo: Topology) -> Assignment:
    """Deal packs round-robin; token counts follow the packs' contents."""
    dealt = _deal(list(packs), topo.total_gpus, ScanPattern.RASTER)
    per_gpu = [[s for pack in lane for s in pack.members] for lane in dealt]
    counts = tuple(sum(pack.total_length for pack in lane) for lane in dealt)
    return Assignment(per_gpu=per_gpu, token_counts=counts)


def assign_local_presort(
    per_gpu_draws: Sequence[Sequence[Sample]],
    topo: Topology,
    scan: ScanPattern = ScanPattern.SNAKE,
) -> Assignment:
    """Sort and redistribute each node's samples among that node's GPUs.

    Every GPU must contribute the same number of samples.  Pooling, sorting
    and dealing happen per node, so no sample crosses a node boundary and
    nodes may be processed concurrently.
    """
    scan = ScanPattern(scan)
    if len(per_gpu_draws) != topo.total_gpus:
        raise ValueError(
            f"got draws for {len(per_gpu_draws)} GPUs, topology has {topo.total_gpus}"
        )
    sizes = {len(draw) for draw in per_gpu_draws}
    if len(sizes) > 1:
        raise ValueError(f"per-GPU draw counts differ: {sorted(sizes)}")
    per_gpu: list[list[Sample]] = []
    gpn = topo.gpus_per_node
    for node in range(topo.num_nodes):
        pool: list[Sample] = []
        for draw in per_gpu_draws[node * gpn : (node + 1) * gpn]:
            pool.extend(draw)
        per_gpu.extend(_deal(_sorted_desc(pool), gpn, scan))
    return _from_per_gpu(per_gpu)
