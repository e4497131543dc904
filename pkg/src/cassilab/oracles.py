"""Naive scalar-loop reference implementations.

These exist solely to cross-check the vectorized library paths; they never
call into them. Everything here runs in float64 and favors obviousness over
speed.
"""

from __future__ import annotations

import math

import numpy as np


def modulate_loops(cube: np.ndarray, mask: np.ndarray) -> np.ndarray:
    c, h, w = cube.shape
    out = np.zeros((c, h, w))
    for m in range(c):
        for x in range(h):
            for y in range(w):
                out[m, x, y] = float(cube[m, x, y]) * float(mask[x, y])
    return out


def disperse_loops(cube: np.ndarray, step: int) -> np.ndarray:
    c, h, w = cube.shape
    wm = w + step * (c - 1)
    out = np.zeros((c, h, wm))
    for m in range(c):
        off = step * m
        for x in range(h):
            for y in range(w):
                out[m, x, y + off] = float(cube[m, x, y])
    return out


def integrate_loops(dispersed: np.ndarray, noise: np.ndarray | None = None) -> np.ndarray:
    c, h, wm = dispersed.shape
    out = np.zeros((h, wm))
    for x in range(h):
        for y in range(wm):
            acc = 0.0
            for m in range(c):
                acc += float(dispersed[m, x, y])
            out[x, y] = acc
    if noise is not None:
        out = out + noise
    return out


def shift_back_loops(measurement: np.ndarray, step: int, channels: int) -> np.ndarray:
    h, wm = measurement.shape
    w = wm - step * (channels - 1)
    out = np.zeros((channels, h, w))
    for m in range(channels):
        off = step * m
        for x in range(h):
            for y in range(w):
                out[m, x, y] = float(measurement[x, y + off])
    return out


def conv2d_loops(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None,
                 stride: int = 1, pad: int | None = None) -> np.ndarray:
    """Six-nested-loop correlation with zero padding."""
    cin, h, w = x.shape
    cout, _, kh, kw = weight.shape
    if pad is None:
        pad = kh // 2
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((cout, ho, wo))
    for o in range(cout):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0
                for c in range(cin):
                    for ki in range(kh):
                        for kj in range(kw):
                            xi = i * stride + ki - pad
                            xj = j * stride + kj - pad
                            if 0 <= xi < h and 0 <= xj < w:
                                acc += float(x[c, xi, xj]) * float(weight[o, c, ki, kj])
                out[o, i, j] = acc + (float(bias[o]) if bias is not None else 0.0)
    return out


def loss_loops(x_out: np.ndarray, x_truth: np.ndarray, reproj: np.ndarray,
               measurement: np.ndarray, weight: float, normalized: bool) -> float:
    """Cube L2 term plus weighted measurement-space term, element by element."""
    acc_cube = 0.0
    for v, t in zip(x_out.reshape(-1), x_truth.reshape(-1)):
        acc_cube += (float(v) - float(t)) ** 2
    acc_meas = 0.0
    for v, t in zip(reproj.reshape(-1), measurement.reshape(-1)):
        acc_meas += (float(v) - float(t)) ** 2
    if normalized:
        acc_cube /= x_out.size
        acc_meas /= measurement.size
    return acc_cube + weight * acc_meas


def gaussian_window_loops(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    win = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            win[i, j] = math.exp(-((i - half) ** 2 + (j - half) ** 2) / (2.0 * sigma ** 2))
    return win / win.sum()


def ssim_loops(a: np.ndarray, b: np.ndarray, peak: float = 1.0,
               window: int = 11, sigma: float = 1.5,
               k1: float = 0.01, k2: float = 0.03) -> float:
    """Windowed SSIM computed one window at a time over valid positions."""
    h, w = a.shape
    win = gaussian_window_loops(window, sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    vals = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            pa = a[i:i + window, j:j + window].astype(np.float64)
            pb = b[i:i + window, j:j + window].astype(np.float64)
            mu_a = float((win * pa).sum())
            mu_b = float((win * pb).sum())
            var_a = float((win * pa * pa).sum()) - mu_a ** 2
            var_b = float((win * pb * pb).sum()) - mu_b ** 2
            cov = float((win * pa * pb).sum()) - mu_a * mu_b
            num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
            den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
            vals.append(num / den)
    return float(np.mean(vals))
