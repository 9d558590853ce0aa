"""Deterministic AdamW with decoupled weight decay.

Decay is applied multiplicatively before the moment update, so a zero-gradient
step still shrinks parameters by exactly (1 - lr*wd). All state is float32;
identical inputs produce bit-identical trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ndgrad import Tensor

__all__ = ["OptState", "adamw_step"]


@dataclass
class OptState:
    """First/second moment per parameter plus the shared step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "OptState":
        return cls(
            m={k: np.zeros(p.shape, dtype=np.float32) for k, p in params.items()},
            v={k: np.zeros(p.shape, dtype=np.float32) for k, p in params.items()},
            step=0,
        )


def adamw_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: OptState,
    *,
    lr: float,
    weight_decay: float,
    beta1: float = 0.9,
    beta2: float = 0.95,
    eps: float = 1e-8,
) -> OptState:
    """One in-place update over every parameter.

    Rejects the whole step (no parameter is touched) if any gradient is
    missing or contains NaN.
    """
    for name in params:
        if name not in grads:
            raise ValueError(f"adamw_step: missing gradient for parameter {name!r}")
        if np.isnan(grads[name]).any():
            raise ValueError(f"adamw_step: NaN gradient in parameter {name!r}")

    state.step += 1
    t = state.step
    b1, b2 = np.float32(beta1), np.float32(beta2)
    bc1 = np.float32(1.0 - beta1**t)
    bc2 = np.float32(1.0 - beta2**t)
    decay = np.float32(1.0 - lr * weight_decay)
    lr32 = np.float32(lr)
    eps32 = np.float32(eps)

    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float32)
        m = state.m[name] = b1 * state.m[name] + (np.float32(1.0) - b1) * g
        v = state.v[name] = b2 * state.v[name] + (np.float32(1.0) - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new = p.data * decay - lr32 * m_hat / (np.sqrt(v_hat) + eps32)
        p.set_data(new)
    return state
