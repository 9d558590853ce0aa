"""Patch-based autoencoder over the autodiff core.

The encoder cuts the image into non-overlapping DxD patches, flattens each
patch, and runs a small per-patch MLP down to the latent width. The decoder
mirrors it and squashes the output into [0, 1] with 0.5*(tanh+1). Everything
is matmul/reshape/slice, so the whole pipeline stays differentiable end to
end, including the block rearrangements.

Both directions are pure functions of (input, params); a read-only parameter
set can serve any number of concurrent callers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndgrad as ng
from .ndgrad import Tensor

__all__ = ["ModelConfig", "ParamSet", "init_params", "encode", "decode"]

# Named map from parameter path to tensor; plain dicts keep insertion order,
# which fixes the iteration (and serialization) order.
ParamSet = dict[str, Tensor]


@dataclass(frozen=True)
class ModelConfig:
    """Autoencoder dimensions. ``depth`` counts activated hidden layers per side."""

    downsample: int = 8
    latent_dim: int = 32
    hidden_dim: int = 256
    depth: int = 2

    def __post_init__(self):
        for name in ("downsample", "latent_dim", "hidden_dim", "depth"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"ModelConfig.{name} must be a positive integer")

    @property
    def patch_dim(self) -> int:
        return self.downsample * self.downsample * 3

    def layer_dims(self, side: str) -> list[tuple[int, int]]:
        h, d = self.hidden_dim, self.depth
        if side == "enc":
            dims = [self.patch_dim] + [h] * d + [self.latent_dim]
        else:
            dims = [self.latent_dim] + [h] * d + [self.patch_dim]
        return list(zip(dims[:-1], dims[1:]))


def init_params(cfg: ModelConfig, seed: int) -> ParamSet:
    """Uniform(-a, a) weights with a = sqrt(6/(fan_in+fan_out)); zero biases.

    The same seed always yields bit-identical parameters.
    """
    rng = np.random.default_rng(seed)
    params: ParamSet = {}
    for side in ("enc", "dec"):
        for i, (fan_in, fan_out) in enumerate(cfg.layer_dims(side)):
            a = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-a, a, size=(fan_in, fan_out)).astype(np.float32)
            params[f"{side}.{i}.w"] = ng.parameter(w)
            params[f"{side}.{i}.b"] = ng.parameter(np.zeros((1, fan_out), dtype=np.float32))
    return params


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    # Bias via ones @ b keeps the engine free of broadcasting.
    ones = ng.constant(np.ones((x.shape[0], 1), dtype=np.float32))
    return ng.add(ng.matmul(x, w), ng.matmul(ones, b))


def _mlp(x: Tensor, params: ParamSet, cfg: ModelConfig, side: str) -> Tensor:
    n_layers = len(cfg.layer_dims(side))
    for i in range(n_layers):
        x = _linear(x, params[f"{side}.{i}.w"], params[f"{side}.{i}.b"])
        if i < n_layers - 1:
            x = ng.leaky_relu(x)
    return x


def _patchify(image: Tensor, d: int) -> Tensor:
    """(H, W, 3) -> (H/d * W/d, d*d*3), patches raster-ordered, row-major inside."""
    h, w, _ = image.shape
    gh, gw = h // d, w // d
    blocks = ng.reshape(image, (gh, d, gw, d * 3))
    rows = [ng.reshape(ng.narrow(blocks, 1, i, i + 1), (gh, gw, d * 3)) for i in range(d)]
    patches = ng.concat(rows, axis=-1)
    return ng.reshape(patches, (gh * gw, d * d * 3))


def _unpatchify(flat: Tensor, gh: int, gw: int, d: int) -> Tensor:
    """Inverse of :func:`_patchify`: (gh*gw, d*d*3) -> (gh*d, gw*d, 3)."""
    patches = ng.reshape(flat, (gh, gw, d * d * 3))
    rows = [
        ng.reshape(ng.narrow(patches, -1, i * d * 3, (i + 1) * d * 3), (gh, 1, gw, d * 3))
        for i in range(d)
    ]
    blocks = ng.concat(rows, axis=1)
    return ng.reshape(blocks, (gh * d, gw * d, 3))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else ng.constant(np.asarray(x, dtype=np.float32))


def encode(image, params: ParamSet, cfg: ModelConfig) -> Tensor:
    """Image (H, W, 3) in [0, 1] to latent grid (H/D, W/D, latent_dim)."""
    image = _as_tensor(image)
    if image.data.ndim != 3 or image.shape[-1] != 3:
        raise ng.ShapeError(f"encode: expected an (H, W, 3) image, got shape {image.shape}")
    h, w, _ = image.shape
    d = cfg.downsample
    if h % d != 0 or w % d != 0:
        raise ng.ShapeError(
            f"encode: image size {h}x{w} must be a multiple of downsample={d} on both sides"
        )
    flat = _patchify(image, d)
    z = _mlp(flat, params, cfg, "enc")
    return ng.reshape(z, (h // d, w // d, cfg.latent_dim))


def decode(z_q, params: ParamSet, cfg: ModelConfig) -> Tensor:
    """Latent grid (h, w, latent_dim) to image (h*D, w*D, 3) in [0, 1]."""
    z_q = _as_tensor(z_q)
    if z_q.data.ndim != 3 or z_q.shape[-1] != cfg.latent_dim:
        raise ng.ShapeError(
            f"decode: expected latent (h, w, {cfg.latent_dim}), got shape {z_q.shape}"
        )
    gh, gw, _ = z_q.shape
    flat = ng.reshape(z_q, (gh * gw, cfg.latent_dim))
    y = _mlp(flat, params, cfg, "dec")
    ones = ng.constant(np.ones(y.shape, dtype=np.float32))
    squashed = ng.scalar_mul(ng.add(ng.tanh(y), ones), 0.5)
    return _unpatchify(squashed, gh, gw, cfg.downsample)
