"""Bit-exact containers and synthetic data for desk-scale experiments.

HSC (spectral cube):  magic ``HSC1`` | u32 H, W, C | u32 dtype code
                      (0 = float32) | little-endian payload, row-major with
                      flat index ((m*H + x)*W + y), i.e. a C-order (C, H, W)
                      float32 array.
HSCW (named weights): magic ``HSCW`` | u32 count | per tensor: u32 name
                      length, UTF-8 name, u32 rank, u32 extents, float32
                      payload.

Both formats round-trip bitwise; corrupted inputs fail loudly. Writers go
through a temp file and rename, so concurrent readers never observe a
partial file.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HSC_MAGIC = b"HSC1"
HSCW_MAGIC = b"HSCW"
_DTYPE_FLOAT32 = 0


def _atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise ValueError(f"truncated file: expected {n} more bytes for {what}, got {len(buf)}")
    return buf


# ---------------------------------------------------------------------------
# HSC cubes
# ---------------------------------------------------------------------------

def write_hsc(cube: np.ndarray, path) -> None:
    """Write a (C, H, W) float32 cube; refuses other dtypes rather than cast."""
    if cube.ndim != 3:
        raise ValueError(f"write_hsc: expected a (C, H, W) cube, got shape {cube.shape}")
    if cube.dtype != np.float32:
        raise TypeError(f"write_hsc: payload is float32 only, got {cube.dtype}; cast explicitly")
    c, h, w = cube.shape
    header = HSC_MAGIC + struct.pack("<IIII", h, w, c, _DTYPE_FLOAT32)
    _atomic_write(path, header + np.ascontiguousarray(cube).astype("<f4").tobytes())


def read_hsc(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != HSC_MAGIC:
            raise ValueError(f"bad magic {magic!r}: not an HSC cube file")
        h, w, c, code = struct.unpack("<IIII", _read_exact(f, 16, "header"))
        if code != _DTYPE_FLOAT32:
            raise ValueError(f"unknown dtype code {code} (only 0 = float32 is defined)")
        payload = _read_exact(f, h * w * c * 4, "payload")
        if f.read(1):
            raise ValueError("trailing bytes after payload: corrupt HSC file")
    return np.frombuffer(payload, dtype="<f4").reshape(c, h, w).copy()


# ---------------------------------------------------------------------------
# HSCW weight checkpoints
# ---------------------------------------------------------------------------

def write_hscw(named_tensors, path) -> None:
    """Write ordered (name, array) pairs; names must be unique, payload float32."""
    items = list(named_tensors)
    names = [n for n, _ in items]
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise ValueError(f"write_hscw: duplicate tensor name {dup!r}")
    chunks = [HSCW_MAGIC, struct.pack("<I", len(items))]
    for name, arr in items:
        arr = np.asarray(arr)
        if arr.dtype != np.float32:
            raise TypeError(f"write_hscw: tensor {name!r} is {arr.dtype}; checkpoints are float32")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).astype("<f4").tobytes())
    _atomic_write(path, b"".join(chunks))


def read_hscw(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != HSCW_MAGIC:
            raise ValueError(f"bad magic {magic!r}: not an HSCW weights file")
        (count,) = struct.unpack("<I", _read_exact(f, 4, "tensor count"))
        for i in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4, f"name length of tensor {i}"))
            name = _read_exact(f, name_len, f"name of tensor {i}").decode("utf-8")
            if name in out:
                raise ValueError(f"duplicate tensor name {name!r} in weights file")
            (rank,) = struct.unpack("<I", _read_exact(f, 4, f"rank of {name!r}"))
            shape = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, f"extents of {name!r}"))
            n = int(np.prod(shape)) if rank else 1
            payload = _read_exact(f, n * 4, f"payload of {name!r}")
            out[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
        if f.read(1):
            raise ValueError("trailing bytes after last tensor: corrupt HSCW file")
    return out


# ---------------------------------------------------------------------------
# metadata sidecars (plain key=value text at <name>.meta)
# ---------------------------------------------------------------------------

def write_meta(path, entries: dict) -> None:
    lines = "".join(f"{k}={v}\n" for k, v in entries.items())
    _atomic_write(str(path) + ".meta", lines.encode("utf-8"))


def read_meta(path) -> dict[str, str]:
    text = Path(str(path) + ".meta").read_text(encoding="utf-8")
    out = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        out[key] = value
    return out


# ---------------------------------------------------------------------------
# synthetic scenes and masks
# ---------------------------------------------------------------------------

SCENE_KINDS = ("gaussian-blobs", "gradient-ramps", "checker-spectra")


@dataclass(frozen=True)
class SyntheticSceneSpec:
    kind: str = "gaussian-blobs"
    height: int = 32
    width: int = 32
    channels: int = 8
    smoothness: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}; choose from {SCENE_KINDS}")
        if min(self.height, self.width, self.channels) < 1:
            raise ValueError("scene dims must all be >= 1")


def generate_scene(spec: SyntheticSceneSpec) -> np.ndarray:
    """Deterministic synthetic radiance cube in [0, 1], shape (C, H, W)."""
    rng = np.random.default_rng(spec.seed)
    h, w, c = spec.height, spec.width, spec.channels
    xs = np.arange(h)[:, None]
    ys = np.arange(w)[None, :]

    if spec.kind == "gaussian-blobs":
        cube = np.zeros((c, h, w))
        n_blobs = max(3, int(4 * spec.smoothness) + rng.integers(0, 3))
        for _ in range(n_blobs):
            cx, cy = rng.uniform(0, h), rng.uniform(0, w)
            radius = rng.uniform(0.08, 0.25) * min(h, w) * max(spec.smoothness, 0.25)
            spatial = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * radius ** 2))
            center = rng.uniform(0, c - 1)
            width_ch = max(1.5, 0.3 * c * max(spec.smoothness, 0.25))
            spectrum = np.exp(-((np.arange(c) - center) ** 2) / (2 * width_ch ** 2))
            cube += rng.uniform(0.4, 1.0) * spectrum[:, None, None] * spatial[None, :, :]
    elif spec.kind == "gradient-ramps":
        phase = rng.uniform(0, 2 * np.pi, size=3)
        drift = rng.uniform(0.5, 1.5) / max(spec.smoothness, 0.25)
        m = np.arange(c)
        ax = 0.5 + 0.5 * np.sin(2 * np.pi * m / (drift * c) + phase[0])
        ay = 0.5 + 0.5 * np.sin(2 * np.pi * m / (drift * c) + phase[1])
        off = 0.5 + 0.5 * np.sin(2 * np.pi * m / (drift * c) + phase[2])
        ramp_x = xs / max(h - 1, 1)
        ramp_y = ys / max(w - 1, 1)
        cube = (ax[:, None, None] * ramp_x[None] + ay[:, None, None] * ramp_y[None]
                + 0.5 * off[:, None, None])
    else:  # checker-spectra
        cell = max(2, int(round(4 * spec.smoothness)))
        parity = ((xs // cell + ys // cell) % 2).astype(np.float64)
        m = np.arange(c)
        spectra = []
        for _ in range(2):
            center = rng.uniform(0, c - 1)
            width_ch = max(1.5, 0.35 * c)
            spectra.append(rng.uniform(0.3, 1.0)
                           * np.exp(-((m - center) ** 2) / (2 * width_ch ** 2)))
        cube = (spectra[0][:, None, None] * (1 - parity)[None]
                + spectra[1][:, None, None] * parity[None])

    cube -= cube.min()
    peak = cube.max()
    if peak > 0:
        cube /= peak
    return cube.astype(np.float32)


def generate_mask(height: int, width: int, density: float = 0.5, seed: int = 0) -> np.ndarray:
    """Seeded Bernoulli binary transmission mask, shape (H, W) float32."""
    if not 0.0 <= density <= 1.0:
        raise ValueError(f"mask density must lie in [0, 1], got {density}")
    rng = np.random.default_rng(seed)
    return (rng.random((height, width)) < density).astype(np.float32)


def ingest_rasters(paths) -> tuple[np.ndarray, float]:
    """Build a cube from one grayscale raster per channel, filename-ordered.

    Returns the [0, 1]-normalized cube and the recorded peak value.
    """
    from PIL import Image

    paths = sorted(Path(p) for p in paths)
    if not paths:
        raise ValueError("ingest_rasters: no channel rasters given")
    planes = []
    for p in paths:
        img = np.asarray(Image.open(p).convert("F"), dtype=np.float64)
        planes.append(img)
    cube = np.stack(planes, axis=0)
    if any(pl.shape != planes[0].shape for pl in planes):
        raise ValueError("ingest_rasters: channel rasters disagree on spatial dims")
    peak = float(cube.max()) if cube.size else 0.0
    if peak > 0:
        cube = cube / peak
    return cube.astype(np.float32), peak
