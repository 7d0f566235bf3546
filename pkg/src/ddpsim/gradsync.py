"""Gradient synchronization across simulated data-parallel workers.

Three clipping disciplines over the same K-worker gradient state:

* after_allreduce  - average full vectors, then clip the mean to norm c.
* before_allreduce - clip each worker's full vector to norm c, then average.
* bucket_wise      - clip each worker's bucket slice to norm c/sqrt(B) and
  average bucket by bucket, walking buckets in reverse layout order the way
  a backward pass produces them.  The per-bucket threshold makes the
  concatenated result obey the same total cap: sqrt(B * (c/sqrt(B))^2) = c.

Reductions use a fixed pairwise tree over ascending worker index, so
results are bit-identical across runs and across any parallel schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class ClipMode(str, Enum):
    AFTER_ALLREDUCE = "after_allreduce"
    BEFORE_ALLREDUCE = "before_allreduce"
    BUCKET_WISE = "bucket_wise"


def equal_bucket_layout(dim: int, num_buckets: int) -> tuple[tuple[int, int], ...]:
    """Contiguous equal-size bucket ranges; the last absorbs the remainder."""
    if num_buckets < 1:
        raise ValueError(f"num_buckets must be >= 1, got {num_buckets}")
    if dim < num_buckets:
        raise ValueError(f"cannot split dimension {dim} into {num_buckets} buckets")
    size = dim // num_buckets
    bounds = [(k * size, (k + 1) * size) for k in range(num_buckets)]
    bounds[-1] = (bounds[-1][0], dim)
    return tuple(bounds)


@dataclass
class GradientState:
    """K per-worker flat gradients plus a bucket partition of [0, D)."""

    workers: np.ndarray
    bucket_layout: tuple[tuple[int, int], ...]

    def __post_init__(self):
        self.workers = _as_worker_matrix(self.workers)
        layout = tuple((int(a), int(b)) for a, b in self.bucket_layout)
        self.bucket_layout = layout
        dim = self.workers.shape[1]
        if not layout:
            raise ValueError("bucket_layout must have at least one bucket")
        stop = 0
        for start, end in layout:
            if start != stop or end <= start:
                raise ValueError(
                    f"bucket_layout must be disjoint contiguous ranges covering [0, {dim}), "
                    f"got {layout}"
                )
            stop = end
        if stop != dim:
            raise ValueError(f"bucket_layout covers [0, {stop}), expected [0, {dim})")

    @property
    def num_workers(self) -> int:
        return self.workers.shape[0]

    @property
    def dim(self) -> int:
        return self.workers.shape[1]

    @property
    def num_buckets(self) -> int:
        return len(self.bucket_layout)


def gradient_state_from_dict(doc: dict) -> GradientState:
    """Build a GradientState from a plain document (test fixtures).

    Expects ``workers`` (list of equal-length vectors) and either
    ``bucket_layout`` (list of [start, stop]) or ``num_buckets``.
    """
    workers = _as_worker_matrix(doc["workers"])
    if "bucket_layout" in doc:
        layout = tuple((int(a), int(b)) for a, b in doc["bucket_layout"])
    else:
        layout = equal_bucket_layout(workers.shape[1], int(doc.get("num_buckets", 1)))
    return GradientState(workers=workers, bucket_layout=layout)


@dataclass(frozen=True)
class ClipConfig:
    threshold: float
    mode: ClipMode

    def __post_init__(self):
        object.__setattr__(self, "mode", ClipMode(self.mode))
        if not (self.threshold > 0 and math.isfinite(self.threshold)):
            raise ValueError(f"threshold must be positive and finite, got {self.threshold}")


def clip_by_norm(g: np.ndarray, limit: float) -> np.ndarray:
    """Rescale g to L2 norm ``limit`` if its norm reaches the limit."""
    if limit <= 0:
        raise ValueError(f"limit must be > 0, got {limit}")
    g = np.asarray(g, dtype=float)
    if not np.isfinite(g).all():
        raise ValueError("gradient has non-finite components")
    norm = float(np.linalg.norm(g))
    if norm >= limit:
        return g * (limit / norm)
    return g


def allreduce_mean(workers) -> np.ndarray:
    """Elementwise mean over workers via a fixed pairwise reduction tree."""
    mat = _as_worker_matrix(workers)
    vecs = [mat[k] for k in range(mat.shape[0])]
    while len(vecs) > 1:
        merged = [vecs[i] + vecs[i + 1] for i in range(0, len(vecs) - 1, 2)]
        if len(vecs) % 2:
            merged.append(vecs[-1])
        vecs = merged
    return vecs[0] / mat.shape[0]


def sync_after(state: GradientState, cfg: ClipConfig) -> np.ndarray:
    """Average full vectors across workers, then clip the mean."""
    _require_mode(cfg, ClipMode.AFTER_ALLREDUCE)
    return clip_by_norm(allreduce_mean(state.workers), cfg.threshold)


def sync_before(state: GradientState, cfg: ClipConfig) -> np.ndarray:
    """Clip each worker's full vector, then average.

    A single worker can contribute at most norm c/K to the result, which is
    what bounds the damage of an anomalously large mini-batch.
    """
    _require_mode(cfg, ClipMode.BEFORE_ALLREDUCE)
    clipped = np.stack([clip_by_norm(w, cfg.threshold) for w in state.workers])
    return allreduce_mean(clipped)


def sync_bucketwise(state: GradientState, cfg: ClipConfig) -> np.ndarray:
    """Clip and average bucket by bucket at threshold c/sqrt(B).

    Buckets are processed in reverse layout order, mirroring backward-pass
    readiness; the result does not depend on that order.
    """
    _require_mode(cfg, ClipMode.BUCKET_WISE)
    limit = cfg.threshold / math.sqrt(state.num_buckets)
    out = np.empty(state.dim)
    for start, stop in reversed(state.bucket_layout):
        clipped = np.stack(
            [clip_by_norm(state.workers[k, start:stop], limit) for k in range(state.num_workers)]
        )
        out[start:stop] = allreduce_mean(clipped)
    return out


_SYNC_FNS = {
    ClipMode.AFTER_ALLREDUCE: sync_after,
    ClipMode.BEFORE_ALLREDUCE: sync_before,
    ClipMode.BUCKET_WISE: sync_bucketwise,
}


def synchronize(state: GradientState, cfg: ClipConfig) -> np.ndarray:
    """Dispatch to the sync discipline selected by cfg.mode."""
    return _SYNC_FNS[cfg.mode](state, cfg)


def _require_mode(cfg: ClipConfig, expected: ClipMode) -> None:
    if cfg.mode is not expected:
        raise ValueError(f"config mode is {cfg.mode.value}, expected {expected.value}")


def _as_worker_matrix(workers) -> np.ndarray:
    try:
        mat = np.asarray(workers, dtype=float)
    except ValueError:
        raise ValueError("workers have mismatched dimensions") from None
    if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
        raise ValueError(f"expected a (workers, dim) matrix, got shape {mat.shape}")
    if not np.isfinite(mat).all():
        raise ValueError("gradient state has non-finite components")
    return mat
