"""Adam with bias correction, kept functional so tests can replay it."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            t=0,
        )


def adam_step(params, grads, state: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.99, eps: float = 1e-8):
    """One Adam update; returns (new param arrays, new state).

    Inputs are left untouched; the defaults mirror the training setup used
    throughout the package (beta2 = 0.99).
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and state must have matching lengths")
    t = state.t + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeError(f"grad shape {g.shape} does not match param {p.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(m=new_m, v=new_v, t=t)
