"""Training losses for the quantizing autoencoder.

Reconstruction is scored twice (plain mean-squared error and the smooth-L1
Charbonnier penalty sqrt(diff^2 + eps^2)); the quantizer contributes a commit
term (pull the encoder toward its frozen quantized values) and a codebook term
(pull the selected rows toward the frozen encoder output). Adversarial and
perceptual terms are pluggable hooks that default to zero, so the weighted sum
keeps all six slots.

All losses are pure and safe to evaluate concurrently on disjoint inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import ndgrad as ng
from .ndgrad import Tensor

__all__ = [
    "LossWeights",
    "LossBreakdown",
    "charbonnier",
    "l2_loss",
    "commit_loss",
    "vq_loss",
    "total_loss",
]

LossHook = Callable[[Tensor, Tensor], "Tensor | float"]


@dataclass(frozen=True)
class LossWeights:
    """Weights of the six loss terms plus the Charbonnier constant."""

    l2: float = 2.0
    charbonnier: float = 1.0
    commit: float = 0.25
    vq: float = 1.0
    gan: float = 0.5
    perceptual: float = 1.0
    eps: float = 1e-3

    def __post_init__(self):
        for name in ("l2", "charbonnier", "commit", "vq", "gan", "perceptual"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name!r} must be non-negative")
        if self.eps <= 0:
            raise ValueError("charbonnier eps must be positive")


@dataclass
class LossBreakdown:
    """Scalar values of each term and their weighted total."""

    l2: float
    charbonnier: float
    commit: float
    vq: float
    gan: float
    perceptual: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {
            "l2": self.l2,
            "charbonnier": self.charbonnier,
            "commit": self.commit,
            "vq": self.vq,
            "gan": self.gan,
            "perceptual": self.perceptual,
            "total": self.total,
        }


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else ng.constant(np.asarray(x, dtype=np.float32))


def _mse(a: Tensor, b: Tensor) -> Tensor:
    return ng.reduce_mean(ng.square(ng.sub(a, b)))


def charbonnier(recon, target, eps: float) -> Tensor:
    """Mean of sqrt(diff^2 + eps^2); smooth everywhere, ~L1 for small eps."""
    if eps <= 0:
        raise ValueError("charbonnier eps must be positive")
    recon, target = _as_tensor(recon), _as_tensor(target)
    diff = ng.sub(recon, target)
    eps2 = np.float32(eps) * np.float32(eps)
    floor = ng.constant(np.full(diff.shape, eps2, dtype=np.float32))
    return ng.reduce_mean(ng.sqrt(ng.add(ng.square(diff), floor)))


def l2_loss(recon, target) -> Tensor:
    """Mean squared difference."""
    return _mse(_as_tensor(recon), _as_tensor(target))


def commit_loss(z, z_q) -> Tensor:
    """MSE with the quantized values frozen; gradient reaches only ``z``."""
    z = _as_tensor(z)
    z_q = _as_tensor(z_q)
    if z.shape != z_q.shape:
        raise ng.ShapeError(f"commit_loss: shapes {z.shape} and {z_q.shape} differ")
    return _mse(z, ng.constant(z_q.data))


def vq_loss(z, z_q) -> Tensor:
    """MSE with the encoder output frozen; gradient reaches only the selected rows."""
    z = _as_tensor(z)
    z_q = _as_tensor(z_q)
    if z.shape != z_q.shape:
        raise ng.ShapeError(f"vq_loss: shapes {z.shape} and {z_q.shape} differ")
    return _mse(z_q, ng.constant(z.data))


def _hook_value(hook: LossHook | None, recon: Tensor, target: Tensor) -> Tensor:
    if hook is None:
        return ng.constant(np.zeros((1,), dtype=np.float32))
    out = hook(recon, target)
    if isinstance(out, Tensor):
        return out
    return ng.constant(np.full((1,), float(out), dtype=np.float32))


def total_loss(
    recon,
    target,
    z,
    z_q,
    weights: LossWeights,
    gan_hook: LossHook | None = None,
    perceptual_hook: LossHook | None = None,
) -> tuple[LossBreakdown, Tensor]:
    """Weighted sum of all six terms.

    Returns the per-term scalar breakdown plus the differentiable total for
    the backward pass. Hooks, when given, must return a scalar.
    """
    recon, target = _as_tensor(recon), _as_tensor(target)
    terms = {
        "l2": l2_loss(recon, target),
        "charbonnier": charbonnier(recon, target, weights.eps),
        "commit": commit_loss(z, z_q),
        "vq": vq_loss(z, z_q),
        "gan": _hook_value(gan_hook, recon, target),
        "perceptual": _hook_value(perceptual_hook, recon, target),
    }
    total = None
    for name, term in terms.items():
        weighted = ng.scalar_mul(term, getattr(weights, name))
        total = weighted if total is None else ng.add(total, weighted)
    breakdown = LossBreakdown(
        **{name: term.item() for name, term in terms.items()}, total=total.item()
    )
    return breakdown, total
