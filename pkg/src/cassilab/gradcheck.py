"""Central finite-difference verification of analytic vector-Jacobian products.

The step size is the cube root of machine epsilon scaled by element magnitude,
which balances truncation against round-off for central differences. Errors
are reported as ``||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||)``.
"""

from __future__ import annotations

import zlib
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad


def fd_step(x: np.ndarray) -> np.ndarray:
    base = float(np.finfo(x.dtype).eps) ** (1.0 / 3.0)
    return base * np.maximum(1.0, np.abs(x))


def fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                sample: np.ndarray | None = None) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``.

    ``sample``: optional flat indices; only those entries are estimated
    (the rest are returned as NaN and skipped by the comparison).
    """
    h = fd_step(x)
    grad = np.full(x.size, np.nan)
    xw = x.copy()
    flat = xw.reshape(-1)
    hf = h.reshape(-1)
    idx = range(x.size) if sample is None else sample
    for i in idx:
        orig = flat[i]
        flat[i] = orig + hf[i]
        fp = f(xw)
        flat[i] = orig - hf[i]
        fm = f(xw)
        flat[i] = orig
        grad[i] = (fp - fm) / (2.0 * hf[i])
    return grad.reshape(x.shape)


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    mask = ~np.isnan(numeric.reshape(-1))
    a = analytic.reshape(-1)[mask]
    n = numeric.reshape(-1)[mask]
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / denom)


def check_vjp(build: Callable[..., ad.Tensor], arrays: Sequence[np.ndarray],
              seed: int = 0, samples_per_input: int | None = None) -> float:
    """Worst relative error of analytic grads of ``sum(build(*xs) * w)``.

    ``build`` maps leaf Tensors to an output Tensor; ``w`` is a fixed random
    covector so the check exercises a general vector-Jacobian product. For
    float32 inputs the difference quotients run on float64 copies: analytic
    float32 gradients are measured against the smooth slope, not the float32
    noise floor.
    """
    rng = np.random.default_rng(seed)
    leaves = [ad.Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = build(*leaves)
    w = rng.standard_normal(out.shape).astype(out.dtype)
    loss = ad.sum_(ad.mul(out, ad.Tensor(w)))
    ad.backward(loss)

    w64 = w.astype(np.float64)
    fd_arrays = [a.astype(np.float64) for a in arrays]

    worst = 0.0
    for pos, arr in enumerate(arrays):
        def scalar(x, pos=pos):
            xs = [ad.Tensor(a.copy()) for a in fd_arrays]
            xs[pos] = ad.Tensor(x)
            o = build(*xs)
            return float((o.data.astype(np.float64) * w64).sum())

        sample = None
        if samples_per_input is not None and arr.size > samples_per_input:
            sample = rng.choice(arr.size, size=samples_per_input, replace=False)
        numeric = fd_gradient(scalar, fd_arrays[pos], sample=sample)
        worst = max(worst, rel_err(leaves[pos].grad, numeric))
    return worst


# ---------------------------------------------------------------------------
# primitive suite (one independent check per autodiff op)
# ---------------------------------------------------------------------------

def _rand(rng, *shape, dtype=np.float64):
    return rng.standard_normal(shape).astype(dtype)


def _check_add(rng, dtype):
    return check_vjp(ad.add, [_rand(rng, 3, 4, dtype=dtype), _rand(rng, 3, 4, dtype=dtype)])


def _check_sub(rng, dtype):
    return check_vjp(ad.sub, [_rand(rng, 3, 4, dtype=dtype), _rand(rng, 3, 4, dtype=dtype)])


def _check_mul(rng, dtype):
    # includes a broadcast operand, as used by per-head attention scales
    e = check_vjp(ad.mul, [_rand(rng, 3, 3, dtype=dtype), _rand(rng, 3, 3, dtype=dtype)])
    b = check_vjp(ad.mul, [_rand(rng, 2, 3, 3, dtype=dtype), _rand(rng, 2, 1, 1, dtype=dtype)])
    return max(e, b)


def _check_div(rng, dtype):
    denom = _rand(rng, 3, 4, dtype=dtype)
    denom += np.sign(denom) + (denom == 0)  # keep away from zero
    return check_vjp(ad.div, [_rand(rng, 3, 4, dtype=dtype), denom])


def _check_scale(rng, dtype):
    return check_vjp(lambda t: ad.scale(t, 2.5), [_rand(rng, 3, 4, dtype=dtype)])


def _check_gelu(rng, dtype):
    return check_vjp(ad.gelu, [_rand(rng, 4, 5, dtype=dtype)])


def _check_matmul(rng, dtype):
    flat = check_vjp(ad.matmul, [_rand(rng, 4, 5, dtype=dtype), _rand(rng, 5, 3, dtype=dtype)])
    batched = check_vjp(ad.matmul, [_rand(rng, 2, 3, 4, dtype=dtype), _rand(rng, 2, 4, 2, dtype=dtype)])
    return max(flat, batched)


def _check_softmax(rng, dtype):
    return check_vjp(lambda t: ad.softmax(t, axis=-1), [_rand(rng, 2, 4, dtype=dtype)])


def _check_l2_normalize(rng, dtype):
    return check_vjp(lambda t: ad.l2_normalize(t, axis=-1), [_rand(rng, 3, 5, dtype=dtype)])


def _check_layernorm(rng, dtype):
    x = _rand(rng, 3, 4, 4, dtype=dtype)
    g = (1.0 + 0.1 * _rand(rng, 3, dtype=dtype)).astype(dtype)
    b = _rand(rng, 3, dtype=dtype)
    return check_vjp(lambda xs, gs, bs: ad.layernorm(xs, gs, bs, axis=0), [x, g, b])


def _check_conv2d(rng, dtype):
    return check_vjp(ad.conv2d, [_rand(rng, 2, 5, 5, dtype=dtype),
                                 _rand(rng, 3, 2, 3, 3, dtype=dtype),
                                 _rand(rng, 3, dtype=dtype)])


def _check_conv2d_strided(rng, dtype):
    return check_vjp(lambda x, w: ad.conv2d_strided(x, w, stride=2, pad=1),
                     [_rand(rng, 2, 6, 6, dtype=dtype), _rand(rng, 3, 2, 4, 4, dtype=dtype)])


def _check_conv_transpose2d(rng, dtype):
    return check_vjp(lambda x, w: ad.conv_transpose2d(x, w, stride=2),
                     [_rand(rng, 3, 4, 4, dtype=dtype), _rand(rng, 3, 2, 2, 2, dtype=dtype)])


def _check_depthwise_conv2d(rng, dtype):
    return check_vjp(ad.depthwise_conv2d, [_rand(rng, 3, 5, 5, dtype=dtype),
                                           _rand(rng, 3, 3, 3, dtype=dtype)])


def _check_movement(rng, dtype):
    # reshape -> permute -> pad -> slice -> roll composition; vjp must invert each move
    def build(t):
        t = ad.reshape(t, (4, 6))
        t = ad.permute(t, (1, 0))
        t = ad.pad(t, ((1, 1), (2, 0)))
        t = ad.slice_(t, (1, 2), (7, 6))
        return ad.roll(t, (1, -2), (0, 1))

    return check_vjp(build, [_rand(rng, 2, 3, 4, dtype=dtype)])


def _check_concat(rng, dtype):
    return check_vjp(lambda a, b: ad.concat([a, b], axis=1),
                     [_rand(rng, 2, 3, dtype=dtype), _rand(rng, 2, 4, dtype=dtype)])


def _check_take(rng, dtype):
    idx = rng.integers(0, 7, size=12)
    return check_vjp(lambda t: ad.take(t, idx, axis=1), [_rand(rng, 2, 7, dtype=dtype)])


def _check_sum(rng, dtype):
    full = check_vjp(lambda t: ad.sum_(t), [_rand(rng, 3, 4, dtype=dtype)])
    axis = check_vjp(lambda t: ad.sum_(t, axis=1), [_rand(rng, 3, 4, 2, dtype=dtype)])
    return max(full, axis)


def _check_mean(rng, dtype):
    return check_vjp(lambda t: ad.mean(t, axis=0), [_rand(rng, 3, 4, dtype=dtype)])


PRIMITIVE_CHECKS: dict[str, Callable] = {
    "add": _check_add,
    "sub": _check_sub,
    "mul": _check_mul,
    "div": _check_div,
    "scale": _check_scale,
    "gelu": _check_gelu,
    "matmul": _check_matmul,
    "softmax": _check_softmax,
    "l2_normalize": _check_l2_normalize,
    "layernorm": _check_layernorm,
    "conv2d": _check_conv2d,
    "conv2d_strided": _check_conv2d_strided,
    "conv_transpose2d": _check_conv_transpose2d,
    "depthwise_conv2d": _check_depthwise_conv2d,
    "movement": _check_movement,
    "concat": _check_concat,
    "take": _check_take,
    "sum": _check_sum,
    "mean": _check_mean,
}

#: float64 tolerance for each primitive (layernorm's chain is a little looser)
PRIMITIVE_TOL = {name: 1e-6 for name in PRIMITIVE_CHECKS}
PRIMITIVE_TOL["layernorm"] = 1e-5


def run_primitive_suite(seed: int = 0, dtype=np.float64) -> dict[str, float]:
    """Worst relative FD error per op. Deterministic given ``seed``."""
    errs = {}
    for name, check in PRIMITIVE_CHECKS.items():
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        errs[name] = check(rng, dtype)
    return errs


# ---------------------------------------------------------------------------
# model-level checks (sampled-entry FD through live parameter tensors)
# ---------------------------------------------------------------------------

def check_params(run: Callable[[], ad.Tensor], named, seed: int = 0,
                 entries_per_tensor: int = 4, max_tensors: int | None = None,
                 fd_in_float64: bool = False) -> float:
    """FD-check dLoss/dParam for parameters read fresh by ``run`` each call.

    ``run`` rebuilds the graph from the parameters' current ``.data``; this
    routine perturbs sampled entries in place and restores them. The loss is
    ``sum(run() * w)`` for a fixed random covector ``w``.

    ``fd_in_float64``: evaluate the difference quotients on a float64 copy of
    the parameters. Float32 analytic gradients are then measured against the
    smooth function's central-difference slope instead of the float32 noise
    floor, which a 1e-3 tolerance could not survive otherwise.
    """
    rng = np.random.default_rng(seed)
    named = list(named)
    out = run()
    w = rng.standard_normal(out.shape).astype(out.dtype)
    w_t = ad.Tensor(w)
    loss = ad.sum_(ad.mul(out, w_t)) if out.size > 1 else ad.mul(out, w_t)
    ad.backward(loss)
    analytic = {}
    for name, t in named:
        analytic[name] = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        t.grad = None

    all_tensors = [t for _, t in named]
    if max_tensors is not None and len(named) > max_tensors:
        picks = rng.choice(len(named), size=max_tensors, replace=False)
        named = [named[i] for i in picks]

    w64 = w.astype(np.float64)

    def scalar() -> float:
        # contraction runs in float64: harness precision, not part of the op under test
        return float((run().data.astype(np.float64) * w64).sum())

    stash = None
    if fd_in_float64:
        stash = [(t, t.data) for t in all_tensors]
        for t, d in stash:
            t.data = d.astype(np.float64)
    try:
        worst = 0.0
        for name, t in named:
            flat = t.data.reshape(-1)
            cbrt_eps = float(np.finfo(t.dtype).eps) ** (1.0 / 3.0)
            n = min(entries_per_tensor, t.size)
            # always include the dominant entry so the sampled norm reflects the
            # tensor's gradient scale (near-zero entries sit at the noise floor)
            amax = int(np.argmax(np.abs(analytic[name]).reshape(-1)))
            draw = [i for i in rng.choice(t.size, size=n, replace=False) if i != amax]
            entries = [amax] + draw[:n - 1]
            ga, gn = [], []
            for i in entries:
                orig = flat[i]
                h = cbrt_eps * max(1.0, abs(float(orig)))
                flat[i] = orig + h
                fp = scalar()
                flat[i] = orig - h
                fm = scalar()
                flat[i] = orig
                gn.append((fp - fm) / (2.0 * h))
                ga.append(float(analytic[name].reshape(-1)[i]))
            ga, gn = np.asarray(ga), np.asarray(gn)
            denom = max(np.linalg.norm(ga), np.linalg.norm(gn), 1e-12)
            worst = max(worst, float(np.linalg.norm(ga - gn) / denom))
    finally:
        if stash is not None:
            for t, d in stash:
                t.data = d
    return worst


def run_model_suite(seed: int = 0, dtype=np.float64) -> dict[str, float]:
    """FD checks for each model block and the full two-stage training loss.

    Runs at the small gradient-check dims (8x8 cube, 4 channels, window 4).
    """
    from . import hsio, model, optics, training

    cfg = model.SstConfig(height=8, width=8, channels=4, n_stages=2,
                          base_channels=8, window_size=4, heads=2)
    rng = np.random.default_rng(seed)
    errs: dict[str, float] = {}

    def feat(c):
        return ad.Tensor(rng.standard_normal((c, 8, 8)).astype(dtype), requires_grad=True)

    stage = model._stage_init(np.random.default_rng(seed + 1), cfg,
                              ["spectral", "spatial"], dtype)
    spec_block = stage.unets[0].enc_blocks[0]
    spat_block = stage.unets[1].enc_blocks[0]

    fd64 = dtype == np.float32

    x = feat(cfg.base_channels)
    named = [("x", x)] + list(model.named_params(spec_block))
    errs["spectral_block"] = check_params(
        lambda: model.spectral_block(x, spec_block, cfg.heads), named,
        seed=seed, max_tensors=8, fd_in_float64=fd64)

    x2 = feat(cfg.base_channels)
    named = [("x", x2)] + list(model.named_params(spat_block))
    errs["spatial_block"] = check_params(
        lambda: model.spatial_block(x2, spat_block, cfg.heads, 4), named,
        seed=seed, max_tensors=8, fd_in_float64=fd64)

    x3 = feat(cfg.base_channels)
    named = [("x", x3)] + list(model.named_params(spec_block.ffn))
    errs["ffn"] = check_params(
        lambda: model.ffn_forward(x3, spec_block.ffn), named, seed=seed,
        fd_in_float64=fd64)

    mask = hsio.generate_mask(8, 8, 0.5, seed=seed).astype(dtype)
    cube_in = feat(cfg.channels)
    named = [("x", cube_in)] + [(n, t) for n, t in model.named_params(stage)
                                if n.startswith("unmix")]
    errs["unmix"] = check_params(
        lambda: model.spectral_unmix(cube_in, mask, stage), named, seed=seed,
        fd_in_float64=fd64)

    weights = model.init_sst_weights(cfg, seed=seed + 2, dtype=dtype)
    # a nonzero mapping conv so later stages influence the loss
    for st_w in weights.stages:
        st_w.mapping.weight.data = (0.05 * np.random.default_rng(seed + 3)
                                    .standard_normal(st_w.mapping.weight.shape)).astype(dtype)
    disp = optics.DispersionConfig(step=1)
    truth = hsio.generate_scene(hsio.SyntheticSceneSpec(
        height=8, width=8, channels=4, seed=seed)).astype(dtype)
    y = optics.forward_project(truth, mask, disp)
    lc = training.LossConfig(reproj_weight=0.2)

    def full_loss():
        x_out = model.reconstruct(y, mask, disp, weights)
        return training.reconstruction_loss(x_out, truth, y, mask, disp, lc)

    errs["full_loss_two_stages"] = check_params(
        full_loss, model.named_params(weights), seed=seed,
        entries_per_tensor=3, max_tensors=5, fd_in_float64=fd64)
    return errs
