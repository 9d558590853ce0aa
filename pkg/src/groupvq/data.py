"""Image ingestion and synthetic corpora.

Files are decoded to float32 (H, W, 3) arrays in [0, 1] (normalizing by the
source bit depth), center-cropped square, and resized when a target size is
given. The two generators cover desk-scale training: smooth random fields for
general-purpose corpora and Gaussian-blob mixtures for the dead-code study.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "load_dataset",
    "load_image",
    "save_image",
    "synthetic_images",
    "blob_images",
]

_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp"}


def _peak_for_mode(img: Image.Image) -> float:
    if img.mode in ("I;16", "I;16B", "I;16L", "I"):
        return 65535.0
    if img.mode == "F":
        return 1.0
    return 255.0


def load_image(path) -> np.ndarray:
    """Decode one file to float32 (H, W, 3) in [0, 1]."""
    with Image.open(path) as img:
        peak = _peak_for_mode(img)
        if img.mode in ("I;16", "I;16B", "I;16L", "I", "F"):
            arr = np.asarray(img, dtype=np.float64)
        else:
            if img.mode not in ("RGB", "L"):
                img = img.convert("RGB")
            arr = np.asarray(img, dtype=np.float64)
    arr = arr / peak
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.shape[2] > 3:
        arr = arr[:, :, :3]
    return np.clip(arr, 0.0, 1.0).astype(np.float32)


def save_image(arr: np.ndarray, path) -> None:
    """Write a float [0, 1] array as an 8-bit RGB file."""
    quantized = np.clip(np.asarray(arr, dtype=np.float64) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(path)


def _resize_float(arr: np.ndarray, size: int) -> np.ndarray:
    """Bilinear per-channel resize of a float image to size x size."""
    if arr.shape[0] == size and arr.shape[1] == size:
        return arr
    channels = []
    for c in range(arr.shape[2]):
        img = Image.fromarray(arr[:, :, c].astype(np.float32), mode="F")
        channels.append(np.asarray(img.resize((size, size), Image.BILINEAR)))
    return np.stack(channels, axis=-1).astype(np.float32)


def _center_crop_square(arr: np.ndarray) -> np.ndarray:
    h, w = arr.shape[:2]
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    return arr[top : top + side, left : left + side]


def load_dataset(
    directory,
    max_items: int | None = None,
    seed: int = 0,
    image_size: int | None = None,
) -> list[np.ndarray]:
    """Load a directory of images in deterministic seed-shuffled order.

    Unreadable files are skipped with a warning; an empty result is an error.
    """
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in _EXTENSIONS)
    order = np.random.default_rng(seed).permutation(len(files))
    images: list[np.ndarray] = []
    for i in order:
        if max_items is not None and len(images) >= max_items:
            break
        path = files[int(i)]
        try:
            arr = load_image(path)
        except Exception as exc:  # noqa: BLE001 - any decode failure is a skip
            warnings.warn(f"skipping unreadable image {path}: {exc}", stacklevel=2)
            continue
        if image_size is not None:
            arr = _resize_float(_center_crop_square(arr), image_size)
        images.append(arr)
    if not images:
        raise ValueError(f"no usable images found in {directory}")
    return images


def synthetic_images(count: int, size: int, seed: int) -> list[np.ndarray]:
    """Smooth random color fields: low-resolution noise upsampled bilinearly."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        low = rng.uniform(0.0, 1.0, size=(4, 4, 3)).astype(np.float32)
        out.append(np.clip(_resize_float(low, size), 0.0, 1.0))
    return out


def blob_images(
    count: int,
    size: int,
    seed: int,
    clusters: int = 8,
    jitter: float = 0.08,
) -> list[np.ndarray]:
    """Mixture of Gaussian blobs in pixel space.

    ``clusters`` prototype images (one soft bump each, random center/width/
    colors) are sampled once; every output is a prototype plus per-image
    brightness shift and pixel noise.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    protos = []
    for _ in range(clusters):
        cy, cx = rng.uniform(0.2, 0.8, size=2)
        width = rng.uniform(0.08, 0.25)
        fg = rng.uniform(0.0, 1.0, size=3)
        bg = rng.uniform(0.0, 1.0, size=3)
        bump = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2)))
        protos.append(bump[:, :, None] * fg[None, None, :] + (1 - bump[:, :, None]) * bg[None, None, :])
    out = []
    for _ in range(count):
        base = protos[int(rng.integers(clusters))]
        shift = rng.normal(scale=jitter, size=(1, 1, 3))
        noise = rng.normal(scale=jitter, size=base.shape)
        out.append(np.clip(base + shift + noise, 0.0, 1.0).astype(np.float32))
    return out
