"""Monte-Carlo evaluation of the batch-balancing strategies.

Each trial draws one global batch from the corpus (uniformly, stratified
per GPU, or as pre-built packs, depending on the strategy), forms the
per-GPU assignment, and records the minimum and maximum per-GPU token
count.  Averages over many trials reproduce the average-min / average-max
balance comparison.

Trials use counter-derived sub-seeds (one RNG stream per trial index), so
results are independent of execution order and bit-identical across runs;
token sums are exact int64 and only the final averaging is done in floating
point (numpy's pairwise mean).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .balance import ScanPattern, pack_corpus
from .seqdata import MAX_SEQ_LEN, Sample, Topology
from .seeding import derive_rng, derive_seed
from .strata import DEFAULT_STRATUM_BOUNDARIES, allocate_counts, stratify


class Strategy(str, Enum):
    """Batch-formation strategies; STRATIFIED (draws without any presort)
    exists as the intermediate ablation step between NONE and LOCAL_PRESORT."""

    NONE = "none"
    GLOBAL_PRESORT = "global_presort"
    PACKING = "packing"
    LOCAL_PRESORT = "local_presort"
    STRATIFIED = "stratified"


@dataclass(frozen=True)
class BalanceExperiment:
    strategy: Strategy
    topo: Topology
    samples: tuple[Sample, ...]
    seed: int
    local_batch: int = 16
    trials: int = 100_000
    scan: ScanPattern = ScanPattern.RASTER
    pack_limit: int = 2
    max_seq_len: int = MAX_SEQ_LEN
    stratum_boundaries: tuple[int, ...] = DEFAULT_STRATUM_BOUNDARIES

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "scan", ScanPattern(self.scan))
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.local_batch < 1:
            raise ValueError(f"local_batch must be >= 1, got {self.local_batch}")
        if self.pack_limit < 1:
            raise ValueError(f"pack_limit must be >= 1, got {self.pack_limit}")
        if not self.samples:
            raise ValueError("experiment needs a non-empty corpus")


@dataclass(frozen=True)
class BalanceStats:
    """Averages over trials of the per-trial min/max per-GPU token count."""

    trials: int
    avg_min: float
    avg_max: float
    avg_range: float
    stderr_min: float
    stderr_max: float
    stderr_range: float


def run_balance_experiment(exp: BalanceExperiment) -> BalanceStats:
    """Run all trials of one experiment and aggregate the balance stats."""
    return _run(exp, _prepare(exp))


def run_ablation(base: BalanceExperiment) -> list[tuple[str, BalanceStats]]:
    """Step-by-step balance table: none, +stratification, +local presorting,
    +snake scanning, plus the global-presorting reference row.

    Rows run on independent derived seed streams so their standard errors
    can be combined as independent when comparing rows.
    """
    if base.strategy is not Strategy.LOCAL_PRESORT:
        raise ValueError(
            f"ablation is defined for the local_presort lineage, got {base.strategy.value}"
        )
    rows = (
        ("none", Strategy.NONE, ScanPattern.RASTER),
        ("+stratification", Strategy.STRATIFIED, ScanPattern.RASTER),
        ("+local_presorting", Strategy.LOCAL_PRESORT, ScanPattern.RASTER),
        ("+snake_scanning", Strategy.LOCAL_PRESORT, ScanPattern.SNAKE),
        ("global_presort", Strategy.GLOBAL_PRESORT, ScanPattern.RASTER),
    )
    out = []
    for i, (label, strategy, scan) in enumerate(rows):
        exp = replace(
            base, strategy=strategy, scan=scan, seed=derive_seed(base.seed, i)
        )
        out.append((label, _run(exp, _prepare(exp))))
    return out


# ---------------------------------------------------------------------------
# corpus preparation


@dataclass
class _Prepared:
    lengths: np.ndarray  # int64, all samples
    stratum_lengths: list[np.ndarray] | None = None
    stratum_counts: tuple[int, ...] | None = None  # per-GPU draws per stratum
    pack_totals: np.ndarray | None = None
    pack_sizes: np.ndarray | None = None
    packs_by_size: dict[int, np.ndarray] | None = None


def _prepare(exp: BalanceExperiment) -> _Prepared:
    lengths = np.fromiter((s.length for s in exp.samples), dtype=np.int64)
    prep = _Prepared(lengths=lengths)
    if exp.strategy in (Strategy.STRATIFIED, Strategy.LOCAL_PRESORT):
        strata = stratify(exp.samples, exp.stratum_boundaries)
        prep.stratum_lengths = [
            np.fromiter((s.length for s in pool), dtype=np.int64)
            for pool in strata.buckets
        ]
        prep.stratum_counts = allocate_counts(strata.probs, exp.local_batch).counts
    elif exp.strategy is Strategy.PACKING:
        packs = pack_corpus(exp.samples, exp.pack_limit, exp.max_seq_len)
        prep.pack_totals = np.fromiter((p.total_length for p in packs), dtype=np.int64)
        prep.pack_sizes = np.fromiter((len(p.members) for p in packs), dtype=np.int64)
        prep.packs_by_size = {
            int(size): np.flatnonzero(prep.pack_sizes == size)
            for size in np.unique(prep.pack_sizes)
        }
    return prep


# ---------------------------------------------------------------------------
# per-trial kernels (exact int64 token sums throughout)


def _draw_uniform(rng, lengths: np.ndarray, take: int) -> np.ndarray:
    if take > lengths.size:
        raise ValueError(
            f"corpus exhausted within a trial: needs {take} samples, corpus has {lengths.size}"
        )
    return lengths[rng.choice(lengths.size, size=take, replace=False)]


def _snake_flip(rows: np.ndarray) -> np.ndarray:
    """Reverse odd deal rows in place (last axis = GPU lane)."""
    rows[..., 1::2, :] = rows[..., 1::2, ::-1]
    return rows


def _stratified_matrix(rng, prep: _Prepared, num_gpus: int) -> np.ndarray:
    """Stratified draws for all GPUs: (local_batch, num_gpus) length matrix."""
    blocks = []
    for count, pool in zip(prep.stratum_counts, prep.stratum_lengths):
        need = count * num_gpus
        if need == 0:
            continue
        if need > pool.size:
            raise ValueError(
                f"corpus exhausted within a trial: a stratum holds {pool.size} "
                f"samples but the trial needs {need}"
            )
        drawn = pool[rng.choice(pool.size, size=need, replace=False)]
        blocks.append(drawn.reshape(count, num_gpus))
    return np.concatenate(blocks, axis=0)


def _trial_token_counts(rng, exp: BalanceExperiment, prep: _Prepared) -> np.ndarray:
    topo, b = exp.topo, exp.local_batch
    G = topo.total_gpus

    if exp.strategy is Strategy.NONE:
        drawn = _draw_uniform(rng, prep.lengths, b * G)
        return drawn.reshape(b, G).sum(axis=0)

    if exp.strategy is Strategy.GLOBAL_PRESORT:
        drawn = np.sort(_draw_uniform(rng, prep.lengths, b * G))[::-1]
        rows = drawn.reshape(b, G).copy()
        if exp.scan is ScanPattern.SNAKE:
            _snake_flip(rows)
        return rows.sum(axis=0)

    if exp.strategy is Strategy.STRATIFIED:
        return _stratified_matrix(rng, prep, G).sum(axis=0)

    if exp.strategy is Strategy.LOCAL_PRESORT:
        gpn = topo.gpus_per_node
        mat = _stratified_matrix(rng, prep, G)
        # regroup columns into per-node pools, sort each pool descending
        pools = mat.reshape(b, topo.num_nodes, gpn).transpose(1, 0, 2).reshape(
            topo.num_nodes, b * gpn
        )
        pools = np.sort(pools, axis=1)[:, ::-1]
        rows = pools.reshape(topo.num_nodes, b, gpn).copy()
        if exp.scan is ScanPattern.SNAKE:
            _snake_flip(rows)
        return rows.sum(axis=1).reshape(G)

    return _packing_token_counts(rng, exp, prep)


def _packing_token_counts(rng, exp: BalanceExperiment, prep: _Prepared) -> np.ndarray:
    """Per-GPU totals when drawing pre-built packs.

    Each GPU draws packs uniformly without replacement until the member
    counts sum to the effective local batch; a pack is eligible only while
    its member count fits the remaining capacity.  When every pack has the
    same member count this is exactly local_batch/pack_limit packs per GPU.
    """
    topo, b = exp.topo, exp.local_batch
    G = topo.total_gpus
    sizes = prep.pack_sizes
    totals = prep.pack_totals
    npacks = totals.size

    unique_sizes = list(prep.packs_by_size)
    if len(unique_sizes) == 1 and b % unique_sizes[0] == 0:
        per_gpu = b // unique_sizes[0]
        take = per_gpu * G
        if take > npacks:
            raise ValueError(
                f"corpus exhausted within a trial: needs {take} packs, have {npacks}"
            )
        drawn = totals[rng.choice(npacks, size=take, replace=False)]
        return drawn.reshape(per_gpu, G).sum(axis=0)

    # mixed pack sizes: sequential draws with rejection against consumed set
    consumed: set[int] = set()
    remaining_by_size = {size: idx.size for size, idx in prep.packs_by_size.items()}
    counts = np.zeros(G, dtype=np.int64)
    for g in range(G):
        cap = b
        while cap > 0:
            eligible = [s for s in unique_sizes if s <= cap and remaining_by_size[s] > 0]
            if not eligible:
                raise ValueError(
                    f"corpus exhausted within a trial: no pack with <= {cap} member(s) "
                    f"left for GPU {g}"
                )
            if len(eligible) == len(unique_sizes):
                pick = _reject_draw(rng, npacks, consumed, None)
            else:
                weights = np.array([remaining_by_size[s] for s in eligible], dtype=float)
                size = eligible[rng.choice(len(eligible), p=weights / weights.sum())]
                pick = _reject_draw(rng, npacks, consumed, prep.packs_by_size[size])
            consumed.add(pick)
            remaining_by_size[int(sizes[pick])] -= 1
            counts[g] += totals[pick]
            cap -= int(sizes[pick])
    return counts


def _reject_draw(rng, npacks: int, consumed: set[int], pool: np.ndarray | None) -> int:
    """Uniform draw over unconsumed packs (optionally restricted to a pool)."""
    limit = npacks if pool is None else pool.size
    for _ in range(64):
        r = int(rng.integers(limit)) if pool is None else int(pool[rng.integers(limit)])
        if r not in consumed:
            return r
    # heavy depletion: enumerate the survivors once and draw exactly
    candidates = [i for i in (range(npacks) if pool is None else pool.tolist()) if i not in consumed]
    return int(candidates[rng.integers(len(candidates))])


# ---------------------------------------------------------------------------
# aggregation


def _run(exp: BalanceExperiment, prep: _Prepared) -> BalanceStats:
    mins = np.empty(exp.trials, dtype=np.int64)
    maxs = np.empty(exp.trials, dtype=np.int64)
    for t in range(exp.trials):
        counts = _trial_token_counts(derive_rng(exp.seed, t), exp, prep)
        mins[t] = counts.min()
        maxs[t] = counts.max()
    ranges = maxs - mins
    return BalanceStats(
        trials=exp.trials,
        avg_min=float(mins.mean()),
        avg_max=float(maxs.mean()),
        avg_range=float(ranges.mean()),
        stderr_min=_stderr(mins),
        stderr_max=_stderr(maxs),
        stderr_range=_stderr(ranges),
    )


def _stderr(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(values.size))
