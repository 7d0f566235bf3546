"""Two-stream pipeline model of per-iteration latency under each clip mode.

One compute stream produces gradient buckets in reverse index order (bucket
B first, as a backward pass would); one communication stream synchronizes
buckets in readiness order.  Where clipping happens decides how much of the
communication can hide under compute:

* after_allreduce: bucket comm starts as soon as its compute ends; one
  global clip trails the last allreduce.
* before_allreduce: nothing can be sent until the full backward pass, the
  norm reduction, and the global clip are done, so comm serializes after
  compute.
* bucket_wise: each bucket is clipped on the compute stream right after it
  is produced and is then immediately eligible for comm; no trailing clip.

Durations are abstract time units; no hardware calibration is attempted.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .configio import load_toml
from .gradsync import ClipMode

Interval = tuple[float, float]


@dataclass(frozen=True)
class TimelinePlan:
    """Per-bucket compute/comm/clip durations plus global clip costs.

    ``t_gclip`` is the whole-vector clip used by the after/before modes;
    ``t_nred`` is the extra collective a before-allreduce variant would
    need for a global norm (0 by default: local-norm clipping needs none).
    """

    t_comp: tuple[float, ...]
    t_comm: tuple[float, ...]
    t_clip: tuple[float, ...] | None = None
    t_gclip: float = 0.0
    t_nred: float = 0.0

    def __post_init__(self):
        comp = tuple(float(x) for x in self.t_comp)
        comm = tuple(float(x) for x in self.t_comm)
        clip = (
            tuple(float(x) for x in self.t_clip)
            if self.t_clip is not None
            else (0.0,) * len(comp)
        )
        object.__setattr__(self, "t_comp", comp)
        object.__setattr__(self, "t_comm", comm)
        object.__setattr__(self, "t_clip", clip)
        if not comp:
            raise ValueError("a plan needs at least one bucket")
        if len(comm) != len(comp) or len(clip) != len(comp):
            raise ValueError(
                f"per-bucket arrays disagree: {len(comp)} comp, {len(comm)} comm, {len(clip)} clip"
            )
        for name, values in (
            ("t_comp", comp),
            ("t_comm", comm),
            ("t_clip", clip),
            ("t_gclip", (self.t_gclip,)),
            ("t_nred", (self.t_nred,)),
        ):
            if any(v < 0 for v in values):
                raise ValueError(f"{name} has negative durations: {values}")

    @property
    def num_buckets(self) -> int:
        return len(self.t_comp)


@dataclass
class Schedule:
    """Start/end intervals per bucket on each stream, plus totals.

    Interval lists are indexed by bucket (0-based for buckets 1..B); the
    processing order is reverse index order.  ``clip`` is populated for
    bucket_wise, ``nred``/``gclip`` for the modes that use them.
    """

    mode: ClipMode
    compute: list[Interval]
    comm: list[Interval]
    clip: list[Interval] | None
    nred: Interval | None
    gclip: Interval | None
    total: float
    compute_busy: float
    comm_busy: float


def schedule(plan: TimelinePlan, mode: ClipMode) -> Schedule:
    """Schedule one iteration of ``plan`` under a clip mode."""
    mode = ClipMode(mode)
    B = plan.num_buckets
    order = range(B - 1, -1, -1)  # bucket B first
    compute: list[Interval] = [(0.0, 0.0)] * B
    clip: list[Interval] | None = None
    ready = [0.0] * B
    t = 0.0

    if mode is ClipMode.BUCKET_WISE:
        clip = [(0.0, 0.0)] * B
        for b in order:
            compute[b] = (t, t + plan.t_comp[b])
            t = compute[b][1]
            clip[b] = (t, t + plan.t_clip[b])
            t = clip[b][1]
            ready[b] = t
        comm = _chain_comm(plan, order, ready)
        total = comm[0][1]  # bucket 1 is communicated last
        nred = gclip = None
        compute_busy = sum(plan.t_comp) + sum(plan.t_clip)
    elif mode is ClipMode.AFTER_ALLREDUCE:
        for b in order:
            compute[b] = (t, t + plan.t_comp[b])
            t = compute[b][1]
            ready[b] = t
        comm = _chain_comm(plan, order, ready)
        gclip = (comm[0][1], comm[0][1] + plan.t_gclip)
        total = gclip[1]
        nred = None
        compute_busy = sum(plan.t_comp) + plan.t_gclip
    else:  # before_allreduce: no overlap at all
        for b in order:
            compute[b] = (t, t + plan.t_comp[b])
            t = compute[b][1]
        nred = (t, t + plan.t_nred)
        t = nred[1]
        gclip = (t, t + plan.t_gclip)
        t = gclip[1]
        ready = [t] * B
        comm = _chain_comm(plan, order, ready)
        total = comm[0][1]
        compute_busy = sum(plan.t_comp) + plan.t_nred + plan.t_gclip

    return Schedule(
        mode=mode,
        compute=compute,
        comm=comm,
        clip=clip,
        nred=nred,
        gclip=gclip,
        total=total,
        compute_busy=compute_busy,
        comm_busy=sum(plan.t_comm),
    )


def _chain_comm(plan: TimelinePlan, order, ready: list[float]) -> list[Interval]:
    """Serialize bucket allreduces on the comm stream in readiness order."""
    comm: list[Interval] = [(0.0, 0.0)] * plan.num_buckets
    end = 0.0
    for b in order:
        start = max(ready[b], end)
        end = start + plan.t_comm[b]
        comm[b] = (start, end)
    return comm


def with_bucket_count(plan: TimelinePlan, num_buckets: int) -> TimelinePlan:
    """Re-bucket a plan, spreading each total evenly over the new buckets."""
    if num_buckets < 1:
        raise ValueError(f"num_buckets must be >= 1, got {num_buckets}")
    return TimelinePlan(
        t_comp=(sum(plan.t_comp) / num_buckets,) * num_buckets,
        t_comm=(sum(plan.t_comm) / num_buckets,) * num_buckets,
        t_clip=(sum(plan.t_clip) / num_buckets,) * num_buckets,
        t_gclip=plan.t_gclip,
        t_nred=plan.t_nred,
    )


def with_comm_scale(plan: TimelinePlan, scale: float) -> TimelinePlan:
    """Scale all communication terms (per-bucket comm and the norm reduce)."""
    if scale < 0:
        raise ValueError(f"comm scale must be >= 0, got {scale}")
    return replace(
        plan,
        t_comm=tuple(scale * x for x in plan.t_comm),
        t_nred=scale * plan.t_nred,
    )


def sweep(
    plan: TimelinePlan,
    modes: Sequence[ClipMode | str],
    bucket_counts: Iterable[int] | None = None,
    comm_scales: Iterable[float] | None = None,
) -> list[dict]:
    """Total latency per (bucket count, comm scale, mode) configuration.

    Rows come out in configuration order and are CSV-ready dicts with keys
    mode, B, comm_scale, total_latency, compute_busy, comm_busy.
    """
    mode_list = [ClipMode(m) for m in modes]
    if not mode_list:
        raise ValueError("sweep needs at least one mode")
    counts = list(bucket_counts) if bucket_counts is not None else [plan.num_buckets]
    scales = list(comm_scales) if comm_scales is not None else [1.0]
    if not counts or not scales:
        raise ValueError("sweep axes must be non-empty")
    rows = []
    for B in counts:
        base = plan if B == plan.num_buckets else with_bucket_count(plan, B)
        for scale in scales:
            scaled = base if scale == 1.0 else with_comm_scale(base, scale)
            for mode in mode_list:
                s = schedule(scaled, mode)
                rows.append(
                    {
                        "mode": mode.value,
                        "B": B,
                        "comm_scale": scale,
                        "total_latency": s.total,
                        "compute_busy": s.compute_busy,
                        "comm_busy": s.comm_busy,
                    }
                )
    return rows


def load_plan(path) -> TimelinePlan:
    """Read a TimelinePlan from a TOML document.

    Recognized fields: ``t_comp``, ``t_comm`` (required), ``t_clip``,
    ``t_gclip``, ``t_nred``.
    """
    doc = load_toml(path)
    known = {"t_comp", "t_comm", "t_clip", "t_gclip", "t_nred"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValueError(f"{path}: unknown plan fields: {', '.join(unknown)}")
    missing = sorted({"t_comp", "t_comm"} - set(doc))
    if missing:
        raise ValueError(f"{path}: missing plan fields: {', '.join(missing)}")
    return TimelinePlan(
        t_comp=doc["t_comp"],
        t_comm=doc["t_comm"],
        t_clip=doc.get("t_clip"),
        t_gclip=float(doc.get("t_gclip", 0.0)),
        t_nred=float(doc.get("t_nred", 0.0)),
    )
