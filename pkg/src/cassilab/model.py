"""Spectral-Spatial Transformer reconstruction network with a reversible wrapper.

A reconstruction runs N stages. Stage inputs follow the closed loop: the raw
measurement feeds stage one; afterwards each stage re-projects the running
estimate through the optics and consumes the measurement residual. Each stage
shift-backs its input, de-aliases it with mask-guided multi-receptive-field
convolutions, runs a W-shaped backbone (a spectral-attention U followed by a
spatial-attention U, each with nested dense skips), and adds a mapped
correction to the running cube estimate.

Feature maps are (channels, height, width) autodiff Tensors throughout.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterator

import numpy as np

from . import autodiff as ad
from . import optics
from .autodiff import Tensor

FAMILY_STAGES = {"S": 1, "M": 2, "L": 4, "Lplus": 9}


@dataclass(frozen=True)
class SstConfig:
    """Architecture hyperparameters; defaults give the desk-scale toy model."""

    height: int = 32
    width: int = 32
    channels: int = 8
    n_stages: int = 1
    base_channels: int = 16
    window_size: int = 8
    heads: int = 2
    levels: int = 2
    ffn_expand: int = 2
    inner_reversible: bool = False  # single-stage: re-project between the two U halves

    def __post_init__(self):
        if self.n_stages < 1:
            raise ValueError("n_stages must be >= 1")
        if self.base_channels % self.heads:
            raise ValueError(
                f"heads ({self.heads}) must divide base_channels ({self.base_channels})")
        div = 2 ** self.levels
        if self.height % div or self.width % div:
            raise ValueError(f"height/width must be divisible by 2^levels = {div}")
        if self.inner_reversible and self.n_stages != 1:
            raise ValueError("inner_reversible is a single-stage variant")

    def level_channels(self, level: int) -> int:
        return self.base_channels * (2 ** level)

    def level_window(self, level: int) -> int:
        extent = min(self.height, self.width) // (2 ** level)
        return max(1, min(self.window_size, extent))


def family_config(name: str, **overrides) -> SstConfig:
    """Published model family: S, M, L, Lplus are 1/2/4/9 stages.

    The single-stage S member applies the reversible re-projection between
    its two backbone halves instead of between whole stages.
    """
    if name not in FAMILY_STAGES:
        raise ValueError(f"unknown family {name!r}; choose from {sorted(FAMILY_STAGES)}")
    n = FAMILY_STAGES[name]
    base = dict(height=256, width=256, channels=28, base_channels=28,
                n_stages=n, inner_reversible=(n == 1))
    base.update(overrides)
    return SstConfig(**base)


# ---------------------------------------------------------------------------
# weight containers
# ---------------------------------------------------------------------------

@dataclass
class ConvW:
    weight: Tensor
    bias: Tensor | None = None


@dataclass
class LayerNormW:
    gain: Tensor
    bias: Tensor


@dataclass
class FfnW:
    expand: ConvW
    depthwise: ConvW
    project: ConvW


@dataclass
class SpectralMsaW:
    to_q: Tensor
    to_k: Tensor
    to_v: Tensor
    out: Tensor
    head_scale: Tensor  # (heads, 1, 1), learnable attention temperature
    pos_embed: ConvW    # depthwise conv on V over the spatial grid


@dataclass
class SpatialMsaW:
    to_q: Tensor
    to_k: Tensor
    to_v: Tensor
    out: Tensor
    bias_table: Tensor  # (heads, (2s-1)^2) relative-offset bias entries


@dataclass
class SpectralBlockW:
    norm1: LayerNormW
    attn: SpectralMsaW
    norm2: LayerNormW
    ffn: FfnW


@dataclass
class SpatialBlockW:
    norm1: LayerNormW
    win_attn: SpatialMsaW
    norm2: LayerNormW
    shift_attn: SpatialMsaW
    norm3: LayerNormW
    ffn: FfnW


@dataclass
class UNetW:
    """One U of the W backbone: encoder column plus nested dense decoder."""

    kind: str                   # "spectral" | "spatial"
    window_sizes: list          # per level (spatial kind)
    enc_blocks: list
    downs: list                 # strided 4x4 convs, level l -> l+1
    ups: list                   # transposed 2x2 convs, per decoder node
    fuses: list                 # 1x1 skip-fusion convs, per decoder node
    dec_blocks: list


@dataclass
class StageW:
    unmix_mix: ConvW   # 1x1 over [shift-back cube, broadcast mask]
    unmix_k3: ConvW
    unmix_k5: ConvW
    unmix_k7: ConvW
    embed: ConvW
    unets: list
    mapping: ConvW     # zero-init projection back to a C-channel correction


@dataclass
class SstWeights:
    cfg: SstConfig
    stages: list


def named_params(obj, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
    """Deterministic (name, tensor) traversal of a weight container."""
    if isinstance(obj, Tensor):
        yield prefix, obj
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            name = f"{prefix}.{f.name}" if prefix else f.name
            yield from named_params(getattr(obj, f.name), name)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from named_params(item, f"{prefix}[{i}]")


def param_count(weights) -> int:
    return sum(t.size for _, t in named_params(weights))


def load_params(weights, arrays: dict[str, np.ndarray]) -> None:
    """Copy named arrays into an existing weight container, shape-checked."""
    seen = set()
    for name, t in named_params(weights):
        if name not in arrays:
            raise KeyError(f"checkpoint is missing tensor {name!r}")
        arr = arrays[name]
        if tuple(arr.shape) != tuple(t.shape):
            raise ValueError(f"tensor {name!r}: checkpoint shape {arr.shape} != model {t.shape}")
        t.data = arr.astype(t.dtype)
        seen.add(name)
    extra = set(arrays) - seen
    if extra:
        raise ValueError(f"checkpoint holds {len(extra)} unknown tensors, e.g. {sorted(extra)[0]!r}")


# ---------------------------------------------------------------------------
# init
# ---------------------------------------------------------------------------

def _p(rng, shape, std, dtype) -> Tensor:
    return Tensor((std * rng.standard_normal(shape)).astype(dtype), requires_grad=True)


def _zeros(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def _ones(shape, dtype) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)


def _conv_init(rng, cout, cin, k, dtype, zero=False) -> ConvW:
    if zero:
        return ConvW(_zeros((cout, cin, k, k), dtype), _zeros((cout,), dtype))
    std = float(np.sqrt(2.0 / (cin * k * k)))
    return ConvW(_p(rng, (cout, cin, k, k), std, dtype), _zeros((cout,), dtype))


def _proj_init(rng, c, dtype) -> Tensor:
    return _p(rng, (c, c), c ** -0.5, dtype)


def _norm_init(c, dtype) -> LayerNormW:
    return LayerNormW(_ones((c,), dtype), _zeros((c,), dtype))


def _ffn_init(rng, c, expand, dtype) -> FfnW:
    e = c * expand
    return FfnW(
        expand=_conv_init(rng, e, c, 1, dtype),
        depthwise=ConvW(_p(rng, (e, 3, 3), np.sqrt(2.0 / 9.0), dtype), _zeros((e,), dtype)),
        project=_conv_init(rng, c, e, 1, dtype),
    )


def _spectral_block_init(rng, c, heads, expand, dtype) -> SpectralBlockW:
    msa = SpectralMsaW(
        to_q=_proj_init(rng, c, dtype),
        to_k=_proj_init(rng, c, dtype),
        to_v=_proj_init(rng, c, dtype),
        out=_proj_init(rng, c, dtype),
        head_scale=_ones((heads, 1, 1), dtype),
        pos_embed=ConvW(_p(rng, (c, 3, 3), np.sqrt(2.0 / 9.0), dtype), _zeros((c,), dtype)),
    )
    return SpectralBlockW(_norm_init(c, dtype), msa, _norm_init(c, dtype),
                          _ffn_init(rng, c, expand, dtype))


def _spatial_msa_init(rng, c, heads, s, dtype) -> SpatialMsaW:
    table = (2 * s - 1) ** 2
    return SpatialMsaW(
        to_q=_proj_init(rng, c, dtype),
        to_k=_proj_init(rng, c, dtype),
        to_v=_proj_init(rng, c, dtype),
        out=_proj_init(rng, c, dtype),
        bias_table=_zeros((heads, table), dtype),
    )


def _spatial_block_init(rng, c, heads, s, expand, dtype) -> SpatialBlockW:
    return SpatialBlockW(
        _norm_init(c, dtype), _spatial_msa_init(rng, c, heads, s, dtype),
        _norm_init(c, dtype), _spatial_msa_init(rng, c, heads, s, dtype),
        _norm_init(c, dtype), _ffn_init(rng, c, expand, dtype),
    )


def _decoder_nodes(levels: int) -> list[tuple[int, int]]:
    return [(i, j) for j in range(1, levels + 1) for i in range(levels - j + 1)]


def _unet_init(rng, cfg: SstConfig, kind: str, dtype) -> UNetW:
    def block(level):
        c = cfg.level_channels(level)
        if kind == "spectral":
            return _spectral_block_init(rng, c, cfg.heads, cfg.ffn_expand, dtype)
        return _spatial_block_init(rng, c, cfg.heads, cfg.level_window(level), cfg.ffn_expand, dtype)

    enc_blocks = [block(l) for l in range(cfg.levels + 1)]
    downs = [_conv_init(rng, cfg.level_channels(l + 1), cfg.level_channels(l), 4, dtype)
             for l in range(cfg.levels)]
    ups, fuses, dec_blocks = [], [], []
    for i, j in _decoder_nodes(cfg.levels):
        ci, ci1 = cfg.level_channels(i), cfg.level_channels(i + 1)
        ups.append(ConvW(_p(rng, (ci1, ci, 2, 2), np.sqrt(2.0 / (ci1 * 4)), dtype),
                         _zeros((ci,), dtype)))
        fuses.append(_conv_init(rng, ci, ci * (j + 1), 1, dtype))
        dec_blocks.append(block(i))
    return UNetW(kind, [cfg.level_window(l) for l in range(cfg.levels + 1)],
                 enc_blocks, downs, ups, fuses, dec_blocks)


def _stage_init(rng, cfg: SstConfig, kinds: list[str], dtype) -> StageW:
    c = cfg.channels
    return StageW(
        unmix_mix=_conv_init(rng, c, 2 * c, 1, dtype),
        unmix_k3=_conv_init(rng, c, c, 3, dtype),
        unmix_k5=_conv_init(rng, c, c, 5, dtype),
        unmix_k7=_conv_init(rng, c, c, 7, dtype),
        embed=_conv_init(rng, cfg.base_channels, c, 3, dtype),
        unets=[_unet_init(rng, cfg, kind, dtype) for kind in kinds],
        mapping=_conv_init(rng, c, cfg.base_channels, 1, dtype, zero=True),
    )


def init_sst_weights(cfg: SstConfig, seed: int = 0, dtype=np.float32) -> SstWeights:
    """Fresh per-stage weights (no sharing across stages), seeded."""
    rng = np.random.default_rng(seed)
    if cfg.inner_reversible:
        stage_kinds = [["spectral"], ["spatial"]]
    else:
        stage_kinds = [["spectral", "spatial"] for _ in range(cfg.n_stages)]
    stages = [_stage_init(rng, cfg, kinds, dtype) for kinds in stage_kinds]
    return SstWeights(cfg, stages)


def init_baseline_weights(cfg: SstConfig, seed: int = 0, dtype=np.float32) -> SstWeights:
    """Shift-back + unmixing-only reference model (no transformer backbone)."""
    rng = np.random.default_rng(seed)
    return SstWeights(replace(cfg, n_stages=1, inner_reversible=False),
                      [_stage_init(rng, cfg, [], dtype)])


def match_param_budget(cfg: SstConfig, target_params: int, max_base: int = 512) -> SstConfig:
    """Smallest base-channel single-stage variant with at least ``target_params``."""
    base = cfg.base_channels
    while base <= max_base:
        candidate = replace(cfg, n_stages=1, inner_reversible=False, base_channels=base)
        if param_count(init_sst_weights(candidate, seed=0)) >= target_params:
            return candidate
        base += cfg.heads
    raise ValueError(f"no single-stage config under base={max_base} reaches {target_params} params")


# ---------------------------------------------------------------------------
# attention blocks
# ---------------------------------------------------------------------------

def ffn_forward(x: Tensor, w: FfnW) -> Tensor:
    t = ad.conv2d(x, w.expand.weight, w.expand.bias)
    t = ad.gelu(t)
    t = ad.depthwise_conv2d(t, w.depthwise.weight, w.depthwise.bias)
    t = ad.gelu(t)
    return ad.conv2d(t, w.project.weight, w.project.bias)


def spectral_attention(x: Tensor, w: SpectralMsaW, heads: int) -> Tensor:
    """Self-attention over the channel dimension: each channel map is a token.

    Channel tokens are L2-normalized over the spatial extent before the
    product (raw scores grow like sqrt(H*W) and saturate the softmax), so
    the learnable per-head temperature starts in the soft regime. Per head
    the attention matrix is (c/heads) x (c/heads); a depthwise conv on V
    supplies the position embedding.
    """
    c, h, wd = x.shape
    if c % heads:
        raise ValueError(f"heads ({heads}) must divide channels ({c})")
    dh = c // heads
    tokens = ad.permute(ad.reshape(x, (c, h * wd)), (1, 0))  # (HW, C)
    q = ad.matmul(tokens, w.to_q)
    k = ad.matmul(tokens, w.to_k)
    v = ad.matmul(tokens, w.to_v)

    def channel_rows(t):  # (HW, C) -> (heads, dh, HW)
        return ad.permute(ad.reshape(t, (h * wd, heads, dh)), (1, 2, 0))

    qh = ad.l2_normalize(channel_rows(q), axis=-1)
    kh = ad.l2_normalize(channel_rows(k), axis=-1)
    vh = channel_rows(v)
    scores = ad.matmul(qh, ad.permute(kh, (0, 2, 1)))        # (heads, dh, dh)
    scores = ad.mul(scores, w.head_scale)
    attn = ad.softmax(scores, axis=-1)
    mixed = ad.matmul(attn, vh)                              # (heads, dh, HW)
    mixed = ad.reshape(ad.permute(mixed, (2, 0, 1)), (h * wd, c))
    out = ad.matmul(mixed, w.out)

    v_grid = ad.reshape(ad.permute(v, (1, 0)), (c, h, wd))
    pos = ad.depthwise_conv2d(v_grid, w.pos_embed.weight, w.pos_embed.bias)
    out = ad.add(out, ad.permute(ad.reshape(pos, (c, h * wd)), (1, 0)))
    return ad.reshape(ad.permute(out, (1, 0)), (c, h, wd))


def spectral_block(x: Tensor, w: SpectralBlockW, heads: int) -> Tensor:
    t = ad.layernorm(x, w.norm1.gain, w.norm1.bias, axis=0)
    x = ad.add(x, spectral_attention(t, w.attn, heads))
    t = ad.layernorm(x, w.norm2.gain, w.norm2.bias, axis=0)
    return ad.add(x, ffn_forward(t, w.ffn))


@lru_cache(maxsize=None)
def relative_position_index(s: int) -> np.ndarray:
    """Flat (s^2 * s^2,) lookup from token pair to relative-offset table slot."""
    coords = np.stack(np.meshgrid(np.arange(s), np.arange(s), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :]
    idx = (rel[0] + s - 1) * (2 * s - 1) + (rel[1] + s - 1)
    return idx.reshape(-1)


@lru_cache(maxsize=None)
def shifted_window_mask(hp: int, wp: int, s: int, shift: int) -> np.ndarray:
    """Additive mask blocking attention between wrapped-around segments.

    Returns (n_windows, 1, s^2, s^2) with 0 for allowed pairs and -1e9 for
    pairs whose tokens came from different pre-roll regions.
    """
    img = np.zeros((hp, wp))
    region = 0
    spans = (slice(0, hp - s), slice(hp - s, hp - shift), slice(hp - shift, hp))
    spans_w = (slice(0, wp - s), slice(wp - s, wp - shift), slice(wp - shift, wp))
    for hs in spans:
        for ws in spans_w:
            img[hs, ws] = region
            region += 1
    windows = img.reshape(hp // s, s, wp // s, s).transpose(0, 2, 1, 3).reshape(-1, s * s)
    blocked = windows[:, :, None] != windows[:, None, :]
    return np.where(blocked, -1e9, 0.0)[:, None, :, :]


def _window_partition(x: Tensor, s: int) -> Tensor:
    c, hp, wp = x.shape
    t = ad.reshape(x, (c, hp // s, s, wp // s, s))
    t = ad.permute(t, (1, 3, 2, 4, 0))
    return ad.reshape(t, ((hp // s) * (wp // s), s * s, c))


def _window_merge(t: Tensor, s: int, c: int, hp: int, wp: int) -> Tensor:
    t = ad.reshape(t, (hp // s, wp // s, s, s, c))
    t = ad.permute(t, (4, 0, 2, 1, 3))
    return ad.reshape(t, (c, hp, wp))


def spatial_attention(x: Tensor, w: SpatialMsaW, heads: int, s: int, shifted: bool) -> Tensor:
    """Windowed multi-head self-attention with relative position bias.

    ``shifted`` rolls the map by half a window before partitioning and masks
    attention across wrapped segments, then rolls back.
    """
    c, hp, wp = x.shape
    if hp % s or wp % s:
        raise ValueError(f"window size {s} must divide padded extents {(hp, wp)}")
    dh = c // heads
    shift = s // 2 if shifted else 0
    if shift:
        x = ad.roll(x, (-shift, -shift), (1, 2))
    tokens = _window_partition(x, s)
    nwin = tokens.shape[0]
    flat = ad.reshape(tokens, (nwin * s * s, c))
    q = ad.matmul(flat, w.to_q)
    k = ad.matmul(flat, w.to_k)
    v = ad.matmul(flat, w.to_v)

    def heads_first(t):  # -> (nwin, heads, s², dh)
        return ad.permute(ad.reshape(t, (nwin, s * s, heads, dh)), (0, 2, 1, 3))

    qh, kh, vh = heads_first(q), heads_first(k), heads_first(v)
    scores = ad.matmul(qh, ad.permute(kh, (0, 1, 3, 2)))
    scores = ad.scale(scores, 1.0 / np.sqrt(dh))
    bias = ad.reshape(ad.take(w.bias_table, relative_position_index(s), axis=1),
                      (1, heads, s * s, s * s))
    scores = ad.add(scores, bias)
    if shift:
        mask = shifted_window_mask(hp, wp, s, shift)
        scores = ad.add(scores, ad.Tensor(mask.astype(x.dtype)))
    attn = ad.softmax(scores, axis=-1)
    mixed = ad.matmul(attn, vh)
    mixed = ad.reshape(ad.permute(mixed, (0, 2, 1, 3)), (nwin * s * s, c))
    out = ad.matmul(mixed, w.out)
    out = _window_merge(ad.reshape(out, (nwin, s * s, c)), s, c, hp, wp)
    if shift:
        out = ad.roll(out, (shift, shift), (1, 2))
    return out


def spatial_block(x: Tensor, w: SpatialBlockW, heads: int, s: int) -> Tensor:
    """W-MSA, shifted W-MSA, then FFN, each pre-normalized with a residual."""
    c, h0, w0 = x.shape
    ph, pw = (-h0) % s, (-w0) % s
    if ph or pw:
        x = ad.pad(x, ((0, 0), (0, ph), (0, pw)))
    t = ad.layernorm(x, w.norm1.gain, w.norm1.bias, axis=0)
    x = ad.add(x, spatial_attention(t, w.win_attn, heads, s, shifted=False))
    t = ad.layernorm(x, w.norm2.gain, w.norm2.bias, axis=0)
    x = ad.add(x, spatial_attention(t, w.shift_attn, heads, s, shifted=True))
    t = ad.layernorm(x, w.norm3.gain, w.norm3.bias, axis=0)
    x = ad.add(x, ffn_forward(t, w.ffn))
    if ph or pw:
        x = ad.slice_(x, (0, 0, 0), (c, h0, w0))
    return x


# ---------------------------------------------------------------------------
# W-shaped backbone
# ---------------------------------------------------------------------------

def _apply_block(x: Tensor, uw: UNetW, blockw, level: int, heads: int) -> Tensor:
    if uw.kind == "spectral":
        return spectral_block(x, blockw, heads)
    return spatial_block(x, blockw, heads, uw.window_sizes[level])


def unet_forward(x: Tensor, uw: UNetW, heads: int) -> Tensor:
    """U-shaped encoder-decoder with nested dense same-resolution skips."""
    levels = len(uw.downs)
    nodes: dict[tuple[int, int], Tensor] = {}
    nodes[(0, 0)] = _apply_block(x, uw, uw.enc_blocks[0], 0, heads)
    for l in range(1, levels + 1):
        down = ad.conv2d_strided(nodes[(l - 1, 0)], uw.downs[l - 1].weight,
                                 uw.downs[l - 1].bias, stride=2, pad=1)
        nodes[(l, 0)] = _apply_block(down, uw, uw.enc_blocks[l], l, heads)
    for flat, (i, j) in enumerate(_decoder_nodes(levels)):
        up = ad.conv_transpose2d(nodes[(i + 1, j - 1)], uw.ups[flat].weight,
                                 uw.ups[flat].bias, stride=2)
        skips = [nodes[(i, t)] for t in range(j)]
        fused = ad.conv2d(ad.concat([up] + skips, axis=0),
                          uw.fuses[flat].weight, uw.fuses[flat].bias)
        nodes[(i, j)] = _apply_block(fused, uw, uw.dec_blocks[flat], i, heads)
    return nodes[(0, levels)]


# ---------------------------------------------------------------------------
# stage subnet and multi-stage reconstruction
# ---------------------------------------------------------------------------

def spectral_unmix(shifted_cube: Tensor, mask: np.ndarray, stage: StageW) -> Tensor:
    """Mask-guided de-aliasing: concat broadcast mask, 1x1 mix, then the sum
    of parallel 3x3/5x5/7x7 same-padded convolutions."""
    c, h, w = shifted_cube.shape
    if mask.shape != (h, w):
        raise ValueError(f"unmix: mask {mask.shape} does not match cube spatial dims {(h, w)}")
    mask_c = ad.Tensor(np.broadcast_to(mask, (c, h, w)).astype(shifted_cube.dtype).copy())
    t = ad.concat([shifted_cube, mask_c], axis=0)
    t = ad.conv2d(t, stage.unmix_mix.weight, stage.unmix_mix.bias)
    return ad.add(ad.add(ad.conv2d(t, stage.unmix_k3.weight, stage.unmix_k3.bias),
                         ad.conv2d(t, stage.unmix_k5.weight, stage.unmix_k5.bias)),
                  ad.conv2d(t, stage.unmix_k7.weight, stage.unmix_k7.bias))


def stage_subnet(y_in: Tensor, mask: np.ndarray, disp: optics.DispersionConfig,
                 stage: StageW, cfg: SstConfig) -> tuple[Tensor, Tensor | None]:
    """Map a measurement(-residual) to (unmixed estimate, backbone correction).

    A stage without backbone Us (the unmixing-only baseline) yields no
    correction.
    """
    # the measurement sums ~C/2 masked channels; bring it back to cube scale
    sb = optics.shift_back(ad.scale(y_in, 2.0 / cfg.channels), disp, cfg.channels)
    estimate = spectral_unmix(sb, mask, stage)
    if not stage.unets:
        return estimate, None
    feat = ad.conv2d(estimate, stage.embed.weight, stage.embed.bias)
    for uw in stage.unets:
        feat = unet_forward(feat, uw, cfg.heads)
    correction = ad.conv2d(feat, stage.mapping.weight, stage.mapping.bias)
    return estimate, correction


@dataclass
class StageTrace:
    """Per-stage snapshots: estimate, its re-projection, and the residual."""

    estimates: list = field(default_factory=list)
    reprojections: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    residual_energy: list = field(default_factory=list)


def reconstruct(measurement, mask: np.ndarray, disp: optics.DispersionConfig,
                weights: SstWeights, want_trace: bool = False):
    """Run all reversible stages; returns the cube Tensor (and trace if asked).

    The first stage consumes the raw measurement; every later stage
    re-projects the running estimate and consumes the residual.
    """
    cfg = weights.cfg
    wm = disp.measurement_width(cfg.width, cfg.channels)
    if measurement.shape != (cfg.height, wm):
        raise ValueError(
            f"reconstruct: measurement shape {measurement.shape} != expected {(cfg.height, wm)}")
    dtype = next(named_params(weights))[1].dtype
    y = measurement if isinstance(measurement, Tensor) \
        else ad.Tensor(np.asarray(measurement, dtype))
    trace = StageTrace()
    x = None
    for stage in weights.stages:
        if x is None:
            y_in = y
        else:
            reproj = optics.forward_project(x, mask, disp)
            y_in = optics.residual_input(y, reproj)
        estimate, correction = stage_subnet(y_in, mask, disp, stage, cfg)
        base = x if x is not None else estimate
        x = base if correction is None else ad.add(base, correction)
        if want_trace:
            z = optics.forward_project(x.data, mask, disp)
            r = y.data - z
            trace.estimates.append(x.data.copy())
            trace.reprojections.append(z)
            trace.residuals.append(r)
            trace.residual_energy.append(float((r ** 2).sum()))
    if want_trace:
        return x, trace
    return x
