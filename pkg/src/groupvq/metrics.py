"""Image quality metrics on plain arrays in [0, 1]."""

from __future__ import annotations

import numpy as np

__all__ = ["psnr", "ssim", "PSNR_CAP"]

PSNR_CAP = 99.0
_SSIM_WINDOW = 8
_SSIM_C1 = 1e-4
_SSIM_C2 = 9e-4


def _check_pair(a: np.ndarray, b: np.ndarray, op: str) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"{op}: image shapes {a.shape} and {b.shape} differ")
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB with peak 1, capped at 99."""
    a, b = _check_pair(a, b, "psnr")
    mse = float(((a - b) ** 2).mean())
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def ssim(a, b) -> float:
    """Structural similarity over non-overlapping 8x8 windows.

    Images are collapsed to grayscale by channel mean; statistics use
    population variance and constants C1=1e-4, C2=9e-4 (peak 1).
    """
    a, b = _check_pair(a, b, "ssim")
    if a.ndim == 3:
        a, b = a.mean(axis=-1), b.mean(axis=-1)
    h, w = a.shape
    k = _SSIM_WINDOW
    if h < k or w < k:
        raise ValueError(f"ssim: image {h}x{w} smaller than the {k}x{k} window")
    gh, gw = h // k, w // k
    aw = a[: gh * k, : gw * k].reshape(gh, k, gw, k)
    bw = b[: gh * k, : gw * k].reshape(gh, k, gw, k)

    mu_a = aw.mean(axis=(1, 3))
    mu_b = bw.mean(axis=(1, 3))
    var_a = (aw**2).mean(axis=(1, 3)) - mu_a**2
    var_b = (bw**2).mean(axis=(1, 3)) - mu_b**2
    cov = (aw * bw).mean(axis=(1, 3)) - mu_a * mu_b

    num = (2 * mu_a * mu_b + _SSIM_C1) * (2 * cov + _SSIM_C2)
    den = (mu_a**2 + mu_b**2 + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
    return float((num / den).mean())
