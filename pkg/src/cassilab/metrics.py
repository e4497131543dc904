"""Image-quality metrics for reconstruction evaluation.

PSNR is 10*log10(peak^2 / MSE) with an infinity sentinel for exact matches.
SSIM follows the standard windowed form: 11x11 Gaussian window, sigma 1.5,
K1 = 0.01, K2 = 0.03, averaged over fully-valid window positions; the cube
variant is the mean over channels.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    if a.shape != b.shape:
        raise ValueError(f"psnr: shapes differ, {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = size // 2
    g = np.arange(size) - half
    k = np.exp(-(g ** 2) / (2.0 * sigma ** 2))
    win = np.outer(k, k)
    return win / win.sum()


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0,
         window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local SSIM of two single-channel images."""
    if a.shape != b.shape:
        raise ValueError(f"ssim: shapes differ, {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValueError(f"ssim: expected 2-d images, got shape {a.shape}")
    if min(a.shape) < window:
        raise ValueError(f"ssim: image {a.shape} smaller than {window}x{window} window")
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    win = gaussian_window(window, sigma)

    def blur(img):
        patches = sliding_window_view(img, (window, window))
        return np.tensordot(patches, win, axes=([2, 3], [0, 1]))

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a ** 2
    var_b = blur(b * b) - mu_b ** 2
    cov = blur(a * b) - mu_a * mu_b
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim_cube(a: np.ndarray, b: np.ndarray, peak: float = 1.0, window: int = 11) -> float:
    """Cube metric: mean single-channel SSIM over spectral channels."""
    if a.shape != b.shape:
        raise ValueError(f"ssim_cube: shapes differ, {a.shape} vs {b.shape}")
    return float(np.mean([ssim(a[m], b[m], peak, window=window) for m in range(a.shape[0])]))


def fitted_ssim_window(height: int, width: int, window: int = 11) -> int:
    """Largest odd window no bigger than the requested one that fits the image."""
    win = min(window, height, width)
    return win if win % 2 else win - 1
