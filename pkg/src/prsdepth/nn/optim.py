"""Adam with bias correction and a step-decay learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay: float = 0.6
    decay_every: int = 5  # epochs

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.decay ** (epoch // self.decay_every)


def adam_step(params: ModelParams, grads: dict, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
    """Update ``params`` in place and return it.

    Keys are visited in sorted order so the update is reproducible.  Raises
    ``FloatingPointError`` naming the first non-finite gradient.
    """
    for k in sorted(grads):
        if not np.all(np.isfinite(grads[k])):
            raise FloatingPointError(f"non-finite gradient for {k}")
    b1, b2 = betas
    params.step += 1
    t = params.step
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for k in sorted(grads):
        g = grads[k]
        m = params.m.get(k)
        if m is None:
            m = params.m[k] = np.zeros_like(g)
            params.v[k] = np.zeros_like(g)
        v = params.v[k]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        params.weights[k] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params
