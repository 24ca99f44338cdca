"""Adam optimizer and the warmup/hold/decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from wavelink.neural.tensor import Tensor


@dataclass
class LrSchedule:
    """Linear warmup to ``target``, hold, then linear decay to zero.

    lr(0) = 0, lr(warmup_iters) = target, constant until decay_start, then a
    straight line hitting zero at total_iters.
    """

    target: float
    warmup_iters: int = 800
    decay_start: int = 36000
    total_iters: int = 120000

    def __post_init__(self):
        if self.target <= 0:
            raise ValueError("target learning rate must be positive")
        if not 0 < self.warmup_iters <= self.decay_start < self.total_iters:
            raise ValueError("need 0 < warmup <= decay_start < total_iters")

    def lr_at(self, iteration: int) -> float:
        if iteration < self.warmup_iters:
            return self.target * iteration / self.warmup_iters
        if iteration < self.decay_start:
            return self.target
        span = self.total_iters - self.decay_start
        return max(0.0, self.target * (self.total_iters - iteration) / span)


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per named parameter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, Tensor], **kwargs) -> "AdamState":
        state = cls(**kwargs)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def adam_step(state: AdamState, params: dict[str, Tensor], lr: float) -> None:
    """One bias-corrected Adam update, in place on the parameter data.

    Parameters whose gradient is None are treated as having a zero gradient
    (their moments still decay).
    """
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for name, p in params.items():
        if name not in state.m:
            raise KeyError(f"optimizer state is missing parameter {name!r}")
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name!r}")
        m = state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        v = state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = p.data - lr * update.astype(p.data.dtype, copy=False)
