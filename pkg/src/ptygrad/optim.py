"""First-order optimizers (SGD, SGD+momentum, RMSProp, Adam) and batch scheduling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError

KINDS = ("sgd", "sgdm", "rmsprop", "adam")


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 0.01
    momentum: float = 0.9
    decay: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"optimizer kind must be one of {KINDS}, got {self.kind!r}")
        if self.lr <= 0:
            raise DomainError("learning rate must be positive")
        for name in ("momentum", "decay", "beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise DomainError(f"{name}={v} out of [0, 1)")
        if self.eps <= 0:
            raise DomainError("eps must be positive")


@dataclass
class OptState:
    """Per-parameter accumulators: first moment m, second moment v, step counter."""

    m: np.ndarray
    v: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, shape) -> "OptState":
        return cls(m=np.zeros(shape), v=np.zeros(shape), step_count=0)


def step(
    cfg: OptimizerConfig,
    state: OptState,
    params: np.ndarray,
    grad: np.ndarray,
) -> tuple[np.ndarray, OptState]:
    """Apply one optimizer update; returns new params and the mutated state."""
    if params.shape != grad.shape or state.m.shape != params.shape:
        raise DimensionError("parameter/gradient/state shape mismatch")
    if not np.all(np.isfinite(grad)):
        raise DomainError("non-finite gradient; step rejected")

    state.step_count += 1
    if cfg.kind == "sgd":
        new = params - cfg.lr * grad
    elif cfg.kind == "sgdm":
        state.m = cfg.momentum * state.m + grad
        new = params - cfg.lr * state.m
    elif cfg.kind == "rmsprop":
        state.v = cfg.decay * state.v + (1.0 - cfg.decay) * grad**2
        new = params - cfg.lr * grad / (np.sqrt(state.v) + cfg.eps)
    else:  # adam, with bias correction
        t = state.step_count
        state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
        state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad**2
        m_hat = state.m / (1.0 - cfg.beta1**t)
        v_hat = state.v / (1.0 - cfg.beta2**t)
        new = params - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return new, state


@dataclass(frozen=True)
class BatchSchedule:
    n_total: int
    batch_size: int
    epochs: int
    order: str = "sequential"  # or "shuffled"
    seed: int | None = None

    def __post_init__(self):
        if not 1 <= self.batch_size <= self.n_total:
            raise DomainError(
                f"batch_size={self.batch_size} out of [1, {self.n_total}]"
            )
        if self.epochs < 0:
            raise DomainError("epochs must be non-negative")
        if self.order not in ("sequential", "shuffled"):
            raise DomainError(f"unknown batch order {self.order!r}")
        if self.order == "shuffled" and self.seed is None:
            raise DomainError("shuffled order requires a seed")


def batches(schedule: BatchSchedule):
    """Yield (epoch, index list) pairs; every index appears once per epoch."""
    rng = np.random.default_rng(schedule.seed) if schedule.order == "shuffled" else None
    for epoch in range(schedule.epochs):
        idx = np.arange(schedule.n_total)
        if rng is not None:
            idx = rng.permutation(idx)
        for start in range(0, schedule.n_total, schedule.batch_size):
            yield epoch, [int(i) for i in idx[start:start + schedule.batch_size]]


def update_count(epochs: int, n_total: int, batch_size: int) -> int:
    """Number of optimizer steps actually applied (the short final batch counts)."""
    return epochs * math.ceil(n_total / batch_size)
