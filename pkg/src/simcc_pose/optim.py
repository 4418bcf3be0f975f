"""AdamW, weight EMA and the flat-cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import ShapeError


@dataclass
class AdamWState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def no_decay(name: str, value: np.ndarray) -> bool:
    """Biases, norm affine terms and per-dim scale/offset vectors skip weight decay."""
    return value.ndim <= 1


def adamw_step(params: dict, grads: dict, state: AdamWState, lr: float, weight_decay: float = 0.0,
               betas=(0.9, 0.999), eps: float = 1e-8, decay_mask=no_decay) -> tuple[dict, AdamWState]:
    """One decoupled-weight-decay Adam update. Mutates and returns ``params`` and ``state``."""
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"adamw: grad for {name} has shape {g.shape}, param {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if weight_decay and not decay_mask(name, p):
            p *= 1.0 - lr * weight_decay
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


def ema_update(ema: dict, params: dict, decay: float) -> dict:
    """ema <- decay * ema + (1 - decay) * params, in place."""
    for name, p in params.items():
        e = ema[name]
        if e.shape != p.shape:
            raise ShapeError(f"ema: {name} has shape {e.shape}, param {p.shape}")
        e *= decay
        e += (1.0 - decay) * p
    return ema


def ema_decay_at(step: int, decay: float, warmup: float = 10.0) -> float:
    """Decay ramp so early averages are not dominated by the random init."""
    return min(decay, (1.0 + step) / (warmup + step))


def flat_cosine_lr(step: int, total_steps: int, base_lr: float, warmup_iters: int,
                   flat_fraction: float = 0.5, final_ratio: float = 0.05) -> float:
    """Linear warm-up, flat until ``flat_fraction`` of training, then cosine to ``final_ratio * base_lr``."""
    if warmup_iters > 0 and step < warmup_iters:
        return base_lr * step / warmup_iters
    flat_end = max(flat_fraction * total_steps, warmup_iters)
    if step <= flat_end or total_steps <= flat_end:
        return base_lr
    t = min((step - flat_end) / (total_steps - flat_end), 1.0)
    floor = base_lr * final_ratio
    return floor + 0.5 * (base_lr - floor) * (1.0 + math.cos(math.pi * t))
