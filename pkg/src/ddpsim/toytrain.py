"""Toy training harness comparing clip disciplines on sample efficiency.

The task is synthetic linear regression (targets = w*.x + noise) so that
gradients are cheap and the landscape is convex: differences between clip
modes are then attributable to how each handles injected outlier
mini-batches, not to optimization pathologies.  With some probability a
worker's whole mini-batch gradient is multiplied by a large factor, which
is the operational stand-in for an anomalously large "problem batch".

Every run is deterministic per seed: each worker owns one counter-derived
RNG stream whose consumption does not depend on the clip mode, so the three
modes see bit-identical data and differ only in synchronization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .gradsync import ClipConfig, ClipMode, GradientState, equal_bucket_layout, synchronize
from .seeding import derive_rng

_VAL_SET_SIZE = 512


class DivergenceError(RuntimeError):
    """Training reached a non-finite loss."""


@dataclass(frozen=True)
class ToyTask:
    """Linear-regression data generator with injected outlier batches."""

    dim: int = 32
    minibatch: int = 32
    noise_std: float = 0.1
    outlier_rate: float = 0.05
    outlier_scale: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.minibatch < 1:
            raise ValueError(f"minibatch must be >= 1, got {self.minibatch}")
        if not 0.0 <= self.outlier_rate <= 1.0:
            raise ValueError(f"outlier_rate must be in [0, 1], got {self.outlier_rate}")
        if self.outlier_scale < 1.0:
            raise ValueError(f"outlier_scale must be >= 1, got {self.outlier_scale}")
        if self.noise_std < 0.0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")


@dataclass
class AdamState:
    """Adam moments and hyperparameters (decoupled weight decay).

    The default eps is deliberately large relative to the learning rate:
    once gradients fall below eps the update becomes gradient-proportional
    (plain descent at rate lr/eps), so the convex toy task converges to
    machine precision instead of bouncing at an O(lr) floor the way
    constant-rate sign-like updates do.
    """

    m: np.ndarray
    v: np.ndarray
    t: int
    lr: float
    beta1: float
    beta2: float
    eps: float
    weight_decay: float

    @classmethod
    def init(
        cls,
        dim: int,
        lr: float = 0.02,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 0.2,
        weight_decay: float = 0.0,
    ) -> "AdamState":
        if lr <= 0:
            raise ValueError(f"lr must be > 0, got {lr}")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ValueError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        if eps <= 0:
            raise ValueError(f"eps must be > 0, got {eps}")
        return cls(
            m=np.zeros(dim),
            v=np.zeros(dim),
            t=0,
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            weight_decay=weight_decay,
        )


def adam_step(
    state: AdamState, theta: np.ndarray, grad: np.ndarray
) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update; returns (new state, new theta)."""
    theta = np.asarray(theta, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if theta.shape != grad.shape or theta.shape != state.m.shape:
        raise ValueError(
            f"dimension mismatch: theta {theta.shape}, grad {grad.shape}, state {state.m.shape}"
        )
    if not (np.isfinite(theta).all() and np.isfinite(grad).all()):
        raise ValueError("non-finite parameter or gradient input")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_theta = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if state.weight_decay:
        new_theta = new_theta - state.lr * state.weight_decay * theta
    return replace(state, m=m, v=v, t=t), new_theta


@dataclass
class TrainResult:
    mode: ClipMode
    losses: np.ndarray  # held-out loss after each step
    initial_loss: float
    theta: np.ndarray

    @property
    def final_loss(self) -> float:
        return float(self.losses[-1]) if len(self.losses) else self.initial_loss


def train(
    task: ToyTask,
    mode: ClipMode | str,
    *,
    workers: int = 16,
    buckets: int = 8,
    steps: int = 500,
    threshold: float = 1.0,
    lr: float = 0.02,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 0.2,
    weight_decay: float = 0.0,
) -> TrainResult:
    """Train with K simulated workers under one clip mode.

    Each step every worker draws a fresh mini-batch (outliers injected per
    task.outlier_rate), local gradients are synchronized under ``mode``,
    and the parameters take one Adam step.  The held-out loss is recorded
    after every step; a non-finite loss raises DivergenceError.
    """
    mode = ClipMode(mode)
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    cfg = ClipConfig(threshold=threshold, mode=mode)
    layout = equal_bucket_layout(task.dim, buckets)

    # fixed stream split: 0 -> ground truth, 1 -> held-out set, 2+k -> worker k
    w_star = derive_rng(task.seed, 0).normal(size=task.dim)
    val_rng = derive_rng(task.seed, 1)
    x_val = val_rng.normal(size=(_VAL_SET_SIZE, task.dim))
    y_val = x_val @ w_star + task.noise_std * val_rng.normal(size=_VAL_SET_SIZE)
    worker_rngs = [derive_rng(task.seed, 2 + k) for k in range(workers)]

    theta = np.zeros(task.dim)
    adam = AdamState.init(
        task.dim, lr=lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay
    )

    def held_out_loss(params: np.ndarray) -> float:
        # overflow to inf is fine here; it is caught as divergence below
        with np.errstate(over="ignore"):
            r = x_val @ params - y_val
            return float(np.mean(r * r))

    initial_loss = held_out_loss(theta)
    losses = np.empty(steps)
    grads = np.empty((workers, task.dim))
    m = task.minibatch
    for step in range(1, steps + 1):
        for k, rng in enumerate(worker_rngs):
            x = rng.normal(size=(m, task.dim))
            y = x @ w_star + task.noise_std * rng.normal(size=m)
            g = (2.0 / m) * (x.T @ (x @ theta - y))
            # the outlier coin is tossed every step so all modes share streams
            if rng.random() < task.outlier_rate:
                g = g * task.outlier_scale
            grads[k] = g
        synced = synchronize(GradientState(grads.copy(), layout), cfg)
        adam, theta = adam_step(adam, theta, synced)
        loss = held_out_loss(theta)
        if not math.isfinite(loss):
            raise DivergenceError(f"loss became non-finite at step {step} under {mode.value}")
        losses[step - 1] = loss
    return TrainResult(mode=mode, losses=losses, initial_loss=initial_loss, theta=theta)


@dataclass
class ModeSummary:
    """Final-loss statistics for one mode across seeds."""

    mode: ClipMode
    final_losses: np.ndarray
    mean_final_loss: float
    stderr: float


def compare_modes(
    task: ToyTask,
    modes: Sequence[ClipMode | str],
    seeds: Sequence[int],
    **train_kwargs,
) -> list[ModeSummary]:
    """Mean and stderr of final loss per mode over a common seed set.

    All modes share each seed's data streams, so per-seed results are
    paired across modes.
    """
    mode_list = [ClipMode(mode) for mode in modes]
    if not mode_list:
        raise ValueError("compare_modes needs at least one mode")
    if not seeds:
        raise ValueError("compare_modes needs at least one seed")
    summaries = []
    for mode in mode_list:
        finals = np.array(
            [
                train(replace(task, seed=seed), mode, **train_kwargs).final_loss
                for seed in seeds
            ]
        )
        stderr = float(finals.std(ddof=1) / math.sqrt(len(finals))) if len(finals) > 1 else 0.0
        summaries.append(
            ModeSummary(
                mode=mode,
                final_losses=finals,
                mean_final_loss=float(finals.mean()),
                stderr=stderr,
            )
        )
    return summaries
