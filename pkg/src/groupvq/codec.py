"""File-level codec: images to token streams and back.

Encoding runs the checkpointed encoder and quantizer and writes the bit-packed
stream; decoding looks the indices back up in the codebooks (optionally
zeroing trailing groups for a coarse preview) and runs the decoder. Images
whose sides are not multiples of the patch size are center-cropped to the
largest valid size; the pre-crop dimensions are kept in the stream header.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ndgrad as ng
from .data import load_image, save_image
from .model import decode, encode
from .quantizer import codes_to_latent, nested_mask, quantize
from .tokenstream import (
    StreamHeader,
    bits_per_index,
    read_stream,
    write_stream,
)
from .trainer import Checkpoint

__all__ = ["EncodeSummary", "encode_image", "decode_tokens"]


@dataclass
class EncodeSummary:
    """Numbers worth printing after an encode."""

    grid_h: int
    grid_w: int
    groups: int
    codebook_size: int
    bits_per_index: int
    payload_bytes: int
    input_bytes: int

    @property
    def compression_ratio(self) -> float:
        return self.input_bytes / self.payload_bytes if self.payload_bytes else float("inf")


def _crop_to_multiple(arr: np.ndarray, d: int) -> np.ndarray:
    h, w = arr.shape[:2]
    ch, cw = (h // d) * d, (w // d) * d
    if ch == 0 or cw == 0:
        raise ValueError(f"image {h}x{w} is smaller than one {d}x{d} patch")
    top, left = (h - ch) // 2, (w - cw) // 2
    return arr[top : top + ch, left : left + cw]


def encode_image(
    image: "str | Path | np.ndarray",
    checkpoint: Checkpoint,
    out_path: str | Path,
) -> EncodeSummary:
    """Tokenize one image into a stream file."""
    arr = load_image(image) if isinstance(image, (str, Path)) else np.asarray(image, np.float32)
    orig_h, orig_w = arr.shape[:2]
    arr = _crop_to_multiple(arr, checkpoint.config.model.downsample)

    cfg = checkpoint.config
    z = encode(arr, checkpoint.params, cfg.model)
    _, tokens, _ = quantize(z, checkpoint.codebooks)
    header = StreamHeader(
        groups=cfg.groups,
        codebook_size=cfg.codebook_size,
        grid_h=tokens.grid_h,
        grid_w=tokens.grid_w,
        orig_h=orig_h,
        orig_w=orig_w,
    )
    payload_bytes = write_stream(out_path, header, tokens)
    return EncodeSummary(
        grid_h=tokens.grid_h,
        grid_w=tokens.grid_w,
        groups=cfg.groups,
        codebook_size=cfg.codebook_size,
        bits_per_index=bits_per_index(cfg.codebook_size),
        payload_bytes=payload_bytes,
        input_bytes=arr.shape[0] * arr.shape[1] * 3,
    )


def decode_tokens(
    stream_path: str | Path,
    checkpoint: Checkpoint,
    m_keep: int | None = None,
    out_path: str | Path | None = None,
) -> np.ndarray:
    """Reconstruct an image from a stream file; returns the float array."""
    header, tokens = read_stream(stream_path)
    cfg = checkpoint.config
    if header.groups != cfg.groups or header.codebook_size != cfg.codebook_size:
        raise ValueError(
            f"token stream ({header.groups} groups, K={header.codebook_size}) does not match "
            f"checkpoint ({cfg.groups} groups, K={cfg.codebook_size})"
        )
    latent = ng.constant(codes_to_latent(tokens, checkpoint.codebooks))
    if m_keep is not None:
        latent = nested_mask(latent, m_keep, cfg.groups)
    recon = decode(latent, checkpoint.params, cfg.model)
    arr = recon.data
    if out_path is not None:
        save_image(arr, out_path)
    return arr
