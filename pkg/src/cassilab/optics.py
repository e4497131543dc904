"""CASSI physical forward model: modulation, dispersion, integration, noise.

The same map drives the scene-to-sensor simulation and the reversible
re-projection of intermediate reconstructions back into measurement space.
Each operation accepts either a plain numpy array (fast simulation path) or
an autodiff Tensor (differentiable path used inside models and losses); the
two paths agree exactly and both match scalar loop oracles.

Layout conventions: a spectral cube is (C, H, W); a coded mask is (H, W); a
measurement is (H, W + step*(C-1)). The canvas column offset of channel m is
step*m, and shift-back reads the width-W window starting at that offset, so
disperse/shift-back round-trip exactly on single-channel cubes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


@dataclass(frozen=True)
class DispersionConfig:
    """Per-channel shear of ``step`` pixels per channel gap.

    ``ref_channel`` records which channel is physically unsheared; canvas
    placement is always relative to channel 0 because the widened canvas has
    no absolute origin.
    """

    step: int = 1
    ref_channel: int = 0

    def __post_init__(self):
        if self.step < 0 or int(self.step) != self.step:
            raise ValueError(f"dispersion step must be a nonnegative integer, got {self.step}")

    def offsets(self, channels: int) -> list[int]:
        return [self.step * m for m in range(channels)]

    def measurement_width(self, width: int, channels: int) -> int:
        return width + self.step * (channels - 1)


@dataclass(frozen=True)
class NoiseModel:
    """Sensor noise: ``none`` or seeded additive gaussian with std ``sigma``."""

    kind: str = "none"
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "additive-gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError(f"noise sigma must be >= 0, got {self.sigma}")

    def sample(self, shape, dtype=np.float32) -> np.ndarray | None:
        if self.kind == "none" or self.sigma == 0.0:
            return None
        rng = np.random.default_rng(self.seed)
        return (self.sigma * rng.standard_normal(shape)).astype(dtype)


def _is_tensor(x) -> bool:
    return isinstance(x, ad.Tensor)


def modulate(cube, mask: np.ndarray):
    """Multiply every spectral channel by the coded mask."""
    c, h, w = cube.shape
    if mask.shape != (h, w):
        raise ValueError(f"modulate: cube spatial dims {(h, w)} != mask dims {mask.shape}")
    if _is_tensor(cube):
        return ad.mul(cube, ad.Tensor(mask.astype(cube.dtype)))
    return cube * mask[None, :, :]


def disperse(cube, disp: DispersionConfig):
    """Copy channel m into a zero-initialized widened canvas at its offset."""
    c, h, w = cube.shape
    wm = disp.measurement_width(w, c)
    offsets = disp.offsets(c)
    if _is_tensor(cube):
        rows = []
        for m, off in enumerate(offsets):
            ch = ad.slice_(cube, (m, 0, 0), (m + 1, h, w))
            rows.append(ad.pad(ch, ((0, 0), (0, 0), (off, wm - w - off))))
        return ad.concat(rows, axis=0)
    out = np.zeros((c, h, wm), dtype=cube.dtype)
    for m, off in enumerate(offsets):
        out[m, :, off:off + w] = cube[m]
    return out


def integrate(dispersed, noise: NoiseModel | None = None):
    """Sum the dispersed cube over channels, plus sensor noise."""
    if _is_tensor(dispersed):
        y = ad.sum_(dispersed, axis=0)
        g = noise.sample(y.shape, y.dtype) if noise is not None else None
        if g is not None:
            y = ad.add(y, ad.Tensor(g))
        return y
    y = dispersed.sum(axis=0)
    g = noise.sample(y.shape, y.dtype) if noise is not None else None
    if g is not None:
        y = y + g
    return y


def forward_project(cube, mask: np.ndarray, disp: DispersionConfig,
                    noise: NoiseModel | None = None):
    """Scene (or reconstruction) to sensor: mask, shear, integrate, add noise.

    Serves both the imaging simulation and the reversible re-projection of a
    stage output into measurement space.
    """
    return integrate(disperse(modulate(cube, mask), disp), noise)


def residual_input(measurement, reproj=None):
    """Next-stage input: the raw measurement at stage 0, else the residual."""
    if reproj is None:
        return measurement
    if measurement.shape != reproj.shape:
        raise ValueError(
            f"residual_input: measurement {measurement.shape} != reprojection {reproj.shape}")
    if _is_tensor(measurement) or _is_tensor(reproj):
        m = measurement if _is_tensor(measurement) else ad.Tensor(measurement)
        r = reproj if _is_tensor(reproj) else ad.Tensor(reproj)
        return ad.sub(m, r)
    return measurement - reproj


def shift_back(measurement, disp: DispersionConfig, channels: int):
    """Slice the measurement into per-channel width-W windows at the offsets.

    Inverse of the canvas placement: output channel m is
    measurement[:, offset_m : offset_m + W].
    """
    h, wm = measurement.shape
    w = wm - disp.step * (channels - 1)
    if w < 1:
        raise ValueError(
            f"shift_back: measurement width {wm} too small for {channels} channels at step {disp.step}")
    offsets = disp.offsets(channels)
    if _is_tensor(measurement):
        return ad.stack([ad.slice_(measurement, (0, off), (h, off + w)) for off in offsets], axis=0)
    out = np.empty((channels, h, w), dtype=measurement.dtype)
    for m, off in enumerate(offsets):
        out[m] = measurement[:, off:off + w]
    return out
