"""Decoupled-weight-decay adaptive optimizer and the warmup+cosine schedule.

The update is the standard decoupled formulation: bias-corrected first and
second moments drive the adaptive step, while weight decay multiplies the
parameter directly by ``1 - lr * decay`` instead of entering the gradient.
The learning rate ramps linearly from zero over the warmup steps, then
follows a half-cosine from the peak down to exactly zero at the final step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass(frozen=True)
class Schedule:
    total_steps: int
    warmup_steps: int
    peak_lr: float = 1e-3

    def __post_init__(self):
        if not 0 <= self.warmup_steps < self.total_steps:
            raise ValueError(
                f"need 0 <= warmup ({self.warmup_steps}) < total ({self.total_steps})")


def lr_at(step: int, schedule: Schedule) -> float:
    """Learning rate at an optimizer step, 0-based; step == total is the end."""
    if not 0 <= step <= schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    if step < schedule.warmup_steps:
        return schedule.peak_lr * step / schedule.warmup_steps
    progress = (step - schedule.warmup_steps) / (schedule.total_steps - schedule.warmup_steps)
    return schedule.peak_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class OptState:
    """Per-parameter moment accumulators plus the shared step counter."""
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2

    @staticmethod
    def for_params(params: dict, beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8, weight_decay: float = 1e-2) -> "OptState":
        return OptState(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
            step=0, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)


def clip_gradients(grads: dict, max_norm: float) -> dict:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads
    scale = max_norm / total
    return {k: (g * np.asarray(scale, dtype=g.dtype)) for k, g in grads.items()}


def adamw_step(params: dict, grads: dict, state: OptState, lr: float) -> dict:
    """One optimizer step; returns the updated parameter dict.

    Parameters are immutable tensors, so updates rebind fresh tensors;
    moments update in place.  Parameters are visited in sorted-name order.
    Non-finite gradients abort with the offending parameter's name.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    out = dict(params)
    for name in sorted(params):
        p = params[name]
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter {p.shape} for {name!r}")
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        dt = p.dtype
        m = state.m[name]
        v = state.v[name]
        m *= dt.type(state.beta1)
        m += dt.type(1.0 - state.beta1) * g
        v *= dt.type(state.beta2)
        v += dt.type(1.0 - state.beta2) * (g * g)
        m_hat = m / dt.type(bc1)
        v_hat = v / dt.type(bc2)
        new = p.data * dt.type(1.0 - lr * state.weight_decay)
        new = new - dt.type(lr) * m_hat / (np.sqrt(v_hat) + dt.type(state.eps))
        out[name] = Tensor(new.astype(dt, copy=False))
    return out
