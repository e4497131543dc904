"""Loss, Adam optimizer, learning-rate schedule, and the desk-scale train loop.

The loss is the cube-space L2 error plus a weighted measurement-space term:
the reconstruction is re-projected through the noiseless optics and compared
against the actual measurement. Both terms default to mean-square reduction
so the weight stays meaningful across resolutions; raw sums are a flag away.

Training is deterministic given its seed: scene order, crops, and the
optimizer state depend on nothing else. Divergence (non-finite loss or
gradients) aborts the loop, keeping the last good checkpoint.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import hsio, metrics, optics
from .autodiff import Tensor
from .model import SstWeights, named_params, reconstruct

METRICS_CSV_HEADER = "epoch,loss,psnr,ssim,lr,wall_ms"


@dataclass(frozen=True)
class LossConfig:
    reproj_weight: float = 0.2
    normalized: bool = True  # mean-square terms; False reproduces raw sums

    def __post_init__(self):
        if self.reproj_weight < 0:
            raise ValueError(f"reproj_weight must be >= 0, got {self.reproj_weight}")


def _sq_error(a: Tensor, b: Tensor, normalized: bool) -> Tensor:
    d = ad.sub(a, b)
    total = ad.sum_(ad.mul(d, d))
    return ad.scale(total, 1.0 / d.size) if normalized else total


def loss_parts(x_out: Tensor, truth, measurement, mask: np.ndarray,
               disp: optics.DispersionConfig, lc: LossConfig) -> tuple[Tensor, Tensor]:
    """(cube L2 term, measurement re-projection term), both differentiable."""
    truth_t = truth if isinstance(truth, Tensor) else ad.Tensor(np.asarray(truth, x_out.dtype))
    if x_out.shape != truth_t.shape:
        raise ValueError(f"loss: cube shapes differ, {x_out.shape} vs {truth_t.shape}")
    meas_t = measurement if isinstance(measurement, Tensor) \
        else ad.Tensor(np.asarray(measurement, x_out.dtype))
    reproj = optics.forward_project(x_out, mask, disp)
    if reproj.shape != meas_t.shape:
        raise ValueError(
            f"loss: re-projection {reproj.shape} does not match measurement {meas_t.shape}")
    return _sq_error(x_out, truth_t, lc.normalized), _sq_error(reproj, meas_t, lc.normalized)


def reconstruction_loss(x_out: Tensor, truth, measurement, mask: np.ndarray,
                        disp: optics.DispersionConfig, lc: LossConfig) -> Tensor:
    cube_term, reproj_term = loss_parts(x_out, truth, measurement, mask, disp, lc)
    return ad.add(cube_term, ad.scale(reproj_term, lc.reproj_weight))


# ---------------------------------------------------------------------------
# optimizer and schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    lr0: float = 4e-4
    halve_every: int = 50
    epochs: int = 300

    def __post_init__(self):
        # lr0 == 0 is allowed: it freezes the optimizer (used by contract tests)
        if self.lr0 < 0:
            raise ValueError(f"lr0 must be >= 0, got {self.lr0}")
        if self.halve_every < 1:
            raise ValueError(f"halve_every must be >= 1, got {self.halve_every}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")


def lr_at(schedule: Schedule, epoch: int) -> float:
    return schedule.lr0 * 0.5 ** (epoch // schedule.halve_every)


class AdamState:
    """Per-parameter first/second moments for bias-corrected Adam."""

    def __init__(self, params: dict[str, Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}


def adam_step(params: dict[str, Tensor], state: AdamState, lr: float) -> None:
    """One bias-corrected update; rejected outright on any non-finite gradient."""
    for name, p in params.items():
        if p.grad is not None and not np.isfinite(p.grad).all():
            raise FloatingPointError(f"adam_step: non-finite gradient for parameter {name!r}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate_scene(weights: SstWeights, disp, mask, scene: np.ndarray,
                   measurement: np.ndarray | None = None) -> dict:
    if measurement is None:
        measurement = optics.forward_project(scene, mask, disp)
    recon = reconstruct(measurement, mask, disp, weights).data
    peak = float(scene.max()) or 1.0
    win = metrics.fitted_ssim_window(scene.shape[1], scene.shape[2])
    return {
        "psnr": metrics.psnr(recon, scene, peak),
        "ssim": metrics.ssim_cube(recon, scene, peak, window=win),
    }


def evaluate(weights: SstWeights, disp, mask, scenes, threads: int = 1) -> dict:
    """Per-scene PSNR/SSIM plus their means; fan-out is read-only on weights."""
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda s: evaluate_scene(weights, disp, mask, s), scenes))
    else:
        rows = [evaluate_scene(weights, disp, mask, s) for s in scenes]
    return {
        "scenes": rows,
        "psnr": float(np.mean([r["psnr"] for r in rows])),
        "ssim": float(np.mean([r["ssim"] for r in rows])),
    }


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    log: list = field(default_factory=list)             # per-epoch dict rows
    iteration_log: list = field(default_factory=list)   # per-iteration loss terms
    best_psnr: float = -math.inf
    best_epoch: int = -1
    best_params: dict = field(default_factory=dict)
    diverged: bool = False


def _snapshot(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: p.data.copy() for k, p in params.items()}


def _crop(scene: np.ndarray, h: int, w: int, rng) -> np.ndarray:
    _, sh, sw = scene.shape
    if (sh, sw) == (h, w):
        return scene
    if sh < h or sw < w:
        raise ValueError(f"scene {scene.shape[1:]} smaller than model dims {(h, w)}")
    i = int(rng.integers(0, sh - h + 1))
    j = int(rng.integers(0, sw - w + 1))
    return scene[:, i:i + h, j:j + w]


def _append_csv(path, row: dict, write_header: bool) -> None:
    with open(path, "a", encoding="utf-8") as f:
        if write_header:
            f.write(METRICS_CSV_HEADER + "\n")
        f.write("{epoch},{loss:.9e},{psnr:.9e},{ssim:.9e},{lr:.9e},{wall_ms:.3f}\n".format(**row))


def train(weights: SstWeights, disp: optics.DispersionConfig, mask: np.ndarray,
          train_scenes, val_scenes, schedule: Schedule, loss_cfg: LossConfig,
          seed: int = 0, csv_path=None, checkpoint_path=None,
          log_fn=None) -> TrainResult:
    """Epoch = one seeded-order pass over the train scenes, one step per scene.

    Per epoch: mean loss, validation PSNR/SSIM, lr, and wall time are logged;
    the best-PSNR weights are checkpointed. Deterministic given ``seed``
    (the wall-time column aside).
    """
    if not train_scenes:
        raise ValueError("train: dataset is empty")
    cfg = weights.cfg
    params = dict(named_params(weights))
    state = AdamState(params)
    rng = np.random.default_rng(seed)
    result = TrainResult()

    def checkpoint(snapshot):
        if checkpoint_path is not None:
            hsio.write_hscw(sorted(snapshot.items()), checkpoint_path)

    result.best_params = _snapshot(params)
    if schedule.epochs == 0:
        checkpoint(result.best_params)
        return result

    for epoch in range(schedule.epochs):
        t0 = time.perf_counter()
        lr = lr_at(schedule, epoch)
        order = rng.permutation(len(train_scenes))
        epoch_losses = []
        try:
            for idx in order:
                scene = _crop(train_scenes[idx], cfg.height, cfg.width, rng)
                y = optics.forward_project(scene, mask, disp)
                x_out = reconstruct(y, mask, disp, weights)
                cube_term, reproj_term = loss_parts(x_out, scene, y, mask, disp, loss_cfg)
                loss = ad.add(cube_term, ad.scale(reproj_term, loss_cfg.reproj_weight))
                lval = loss.item()
                if not math.isfinite(lval):
                    raise FloatingPointError("non-finite loss")
                ad.backward(loss)
                adam_step(params, state, lr)
                ad.zero_grads(params.values())
                epoch_losses.append(lval)
                result.iteration_log.append({
                    "epoch": epoch,
                    "loss": lval,
                    "cube_term": cube_term.item(),
                    "reproj_term": reproj_term.item(),
                })
            val = evaluate(weights, disp, mask, val_scenes) if val_scenes \
                else {"psnr": math.nan, "ssim": math.nan}
        except (FloatingPointError, AssertionError):
            result.diverged = True
            checkpoint(result.best_params)
            return result

        row = {
            "epoch": epoch,
            "loss": float(np.mean(epoch_losses)),
            "psnr": val["psnr"],
            "ssim": val["ssim"],
            "lr": lr,
            "wall_ms": 1000.0 * (time.perf_counter() - t0),
        }
        result.log.append(row)
        if csv_path is not None:
            _append_csv(csv_path, row, write_header=(epoch == 0))
        if log_fn is not None:
            log_fn(row)
        if val_scenes and val["psnr"] > result.best_psnr:
            result.best_psnr = val["psnr"]
            result.best_epoch = epoch
            result.best_params = _snapshot(params)
            checkpoint(result.best_params)

    if not val_scenes:
        result.best_params = _snapshot(params)
        checkpoint(result.best_params)
    return result
