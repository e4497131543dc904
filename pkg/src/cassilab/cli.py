"""Command-line entry point: simulate, train, reconstruct, eval, verify.

Every run resolves its configuration from defaults, an optional flat
``key=value`` config file, and command-line flags (flags win), echoes the
full resolution as ``config key=value`` lines, and exits 0 only if all
requested work succeeded. Usage problems exit 2; training divergence exits
3; failed verification suites exit 1.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gradcheck, hsio, metrics, model, optics, oracles, training

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3


@dataclass(frozen=True)
class Flag:
    name: str
    type: type = str
    default: object = None
    help: str = ""
    multiple: bool = False

    @property
    def dest(self) -> str:
        return self.name.lstrip("-").replace("-", "_")


def _parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _default_threads() -> int:
    env = os.environ.get("SST_THREADS")
    if env is not None:
        return int(env)
    return os.cpu_count() or 1


def _add_flags(parser: argparse.ArgumentParser, flags: list[Flag]) -> None:
    parser.add_argument("--config", default=None,
                        help="flat key=value file; command-line flags override it")
    for f in flags:
        kwargs = dict(help=f.help, default=argparse.SUPPRESS, dest=f.dest)
        if f.type is bool:
            kwargs["action"] = "store_const"
            kwargs["const"] = True
        else:
            kwargs["type"] = f.type
            if f.multiple:
                kwargs["nargs"] = "+"
        parser.add_argument(f.name, **kwargs)


def _resolve(parser, args, flags: list[Flag]) -> dict:
    """defaults <- config file <- explicit flags; unknown file keys are errors."""
    resolved = {f.dest: f.default for f in flags}
    by_dest = {f.dest: f for f in flags}
    if args.config is not None:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as e:
            parser.error(f"cannot read config file: {e}")
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep:
                parser.error(f"{args.config}:{lineno}: expected key=value, got {line!r}")
            if key not in by_dest:
                parser.error(f"{args.config}:{lineno}: unknown key {key!r}")
            f = by_dest[key]
            try:
                if f.type is bool:
                    resolved[key] = _parse_bool(value)
                elif f.multiple:
                    resolved[key] = [f.type(v) for v in value.split(",") if v]
                else:
                    resolved[key] = f.type(value.strip())
            except ValueError as e:
                parser.error(f"{args.config}:{lineno}: {e}")
    for key, value in vars(args).items():
        if key in by_dest:
            resolved[key] = value
    return resolved


def _echo_config(command: str, cfg: dict) -> None:
    for key in sorted(cfg):
        value = cfg[key]
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        print(f"config {key}={value}")
    sys.stdout.flush()


def _load_mask(spec: str, height: int, width: int, density: float, seed: int) -> np.ndarray:
    if spec != "random":
        cube = hsio.read_hsc(spec)
        if cube.shape[0] != 1:
            raise ValueError(f"mask file must hold a single channel, got {cube.shape}")
        return cube[0]
    return hsio.generate_mask(height, width, density, seed)


def _save_mask(mask: np.ndarray, path) -> None:
    hsio.write_hsc(mask[None].astype(np.float32), path)


def _write_channel_pngs(cube: np.ndarray, out_dir: Path, basename: str) -> None:
    """Min-max normalized per-channel PNGs; scales recorded in the sidecar."""
    from PIL import Image

    scales = {}
    for m in range(cube.shape[0]):
        ch = cube[m].astype(np.float64)
        lo, hi = float(ch.min()), float(ch.max())
        scale = (hi - lo) or 1.0
        img = np.clip((ch - lo) / scale * 255.0, 0, 255).astype(np.uint8)
        name = f"{basename}_ch{m:02d}.png"
        Image.fromarray(img, mode="L").save(out_dir / name)
        scales[f"ch{m:02d}_min"] = lo
        scales[f"ch{m:02d}_max"] = hi
    hsio.write_meta(out_dir / f"{basename}_png", scales)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

SIMULATE_FLAGS = [
    Flag("--scene", str, "gaussian-blobs",
         help="path to an HSC cube, or a synthetic kind: " + "|".join(hsio.SCENE_KINDS)),
    Flag("--height", int, 32), Flag("--width", int, 32), Flag("--channels", int, 8),
    Flag("--smoothness", float, 1.0),
    Flag("--mask", str, "random", help="path to a 1-channel HSC mask, or 'random'"),
    Flag("--mask-density", float, 0.5),
    Flag("--d", int, 1, help="dispersion shift step in pixels per channel gap"),
    Flag("--noise-sigma", float, 0.0),
    Flag("--seed", int, 0),
    Flag("--out", str, "sim_out", help="output directory"),
]


def cmd_simulate(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    if Path(cfg["scene"]).is_file():
        scene = hsio.read_hsc(cfg["scene"])
        synthesized = False
    elif cfg["scene"] in hsio.SCENE_KINDS:
        scene = hsio.generate_scene(hsio.SyntheticSceneSpec(
            kind=cfg["scene"], height=cfg["height"], width=cfg["width"],
            channels=cfg["channels"], smoothness=cfg["smoothness"], seed=cfg["seed"]))
        synthesized = True
    else:
        print(f"error: --scene {cfg['scene']!r} is neither a file nor a synthetic kind",
              file=sys.stderr)
        return EXIT_USAGE
    channels, height, width = scene.shape
    mask = _load_mask(cfg["mask"], height, width, cfg["mask_density"], cfg["seed"] + 1)
    disp = optics.DispersionConfig(step=cfg["d"])
    noise = optics.NoiseModel(kind="additive-gaussian" if cfg["noise_sigma"] > 0 else "none",
                              sigma=cfg["noise_sigma"], seed=cfg["seed"] + 2)
    y = optics.forward_project(scene, mask, disp, noise)

    hsio.write_hsc(y[None].astype(np.float32), out_dir / "measurement.hsc")
    _save_mask(mask, out_dir / "mask.hsc")
    if synthesized:
        hsio.write_hsc(scene, out_dir / "scene.hsc")
    hsio.write_meta(out_dir / "measurement.hsc", {
        "height": y.shape[0], "width": y.shape[1], "channels": channels,
        "scene_width": width, "d": cfg["d"], "noise_sigma": cfg["noise_sigma"],
        "seed": cfg["seed"], "peak": float(scene.max()),
    })
    print(f"measurement {y.shape[0]}x{y.shape[1]}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

TRAIN_FLAGS = [
    Flag("--preset", str, "toy", help="toy | custom"),
    Flag("--stages", int, 1),
    Flag("--epochs", int, 50, help="toy epochs are passes over 6 train scenes"),
    Flag("--lr", float, 4e-3,
         help="desk-scale default; the full-scale recipe uses 4e-4 halved every 50 epochs"),
    Flag("--halve-every", int, 20, help="epochs between halvings of the learning rate"),
    Flag("--xi", float, 0.2, help="weight of the measurement re-projection loss"),
    Flag("--seed", int, 0),
    Flag("--out-dir", str, "train_out"),
    Flag("--height", int, 32), Flag("--width", int, 32), Flag("--channels", int, 8),
    Flag("--base-channels", int, 16), Flag("--window", int, 8), Flag("--heads", int, 2),
    Flag("--d", int, 1),
    Flag("--inner-reversible", bool, False,
         help="single stage with re-projection between the two backbone halves"),
    Flag("--scene-kind", str, "checker-spectra", help="toy preset synthetic scene kind"),
    Flag("--scenes", str, None, help="custom preset: directory of HSC truth cubes"),
    Flag("--mask", str, "random"),
    Flag("--mask-density", float, 0.5),
    Flag("--val-count", int, 2, help="scenes held out for validation"),
    Flag("--n-scenes", int, 8, help="toy preset: synthetic scenes to generate"),
]


def _toy_scenes(cfg: dict) -> list[np.ndarray]:
    return [hsio.generate_scene(hsio.SyntheticSceneSpec(
        kind=cfg["scene_kind"], height=cfg["height"], width=cfg["width"],
        channels=cfg["channels"], seed=cfg["seed"] * 1000 + i))
        for i in range(cfg["n_scenes"])]


def _weights_meta(sst_cfg: model.SstConfig, d: int) -> dict:
    return {
        "height": sst_cfg.height, "width": sst_cfg.width, "channels": sst_cfg.channels,
        "n_stages": sst_cfg.n_stages, "base_channels": sst_cfg.base_channels,
        "window_size": sst_cfg.window_size, "heads": sst_cfg.heads,
        "levels": sst_cfg.levels, "ffn_expand": sst_cfg.ffn_expand,
        "inner_reversible": sst_cfg.inner_reversible, "d": d,
    }


def _config_from_meta(meta: dict) -> tuple[model.SstConfig, optics.DispersionConfig]:
    cfg = model.SstConfig(
        height=int(meta["height"]), width=int(meta["width"]), channels=int(meta["channels"]),
        n_stages=int(meta["n_stages"]), base_channels=int(meta["base_channels"]),
        window_size=int(meta["window_size"]), heads=int(meta["heads"]),
        levels=int(meta["levels"]), ffn_expand=int(meta["ffn_expand"]),
        inner_reversible=meta["inner_reversible"] == "True")
    return cfg, optics.DispersionConfig(step=int(meta["d"]))


def cmd_train(cfg: dict) -> int:
    if cfg["preset"] not in ("toy", "custom"):
        print(f"error: unknown preset {cfg['preset']!r}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    if cfg["preset"] == "toy":
        scenes = _toy_scenes(cfg)
    else:
        if not cfg["scenes"]:
            print("error: custom preset needs --scenes", file=sys.stderr)
            return EXIT_USAGE
        paths = sorted(Path(cfg["scenes"]).glob("*.hsc"))
        if not paths:
            print(f"error: no .hsc cubes under {cfg['scenes']}", file=sys.stderr)
            return EXIT_USAGE
        scenes = [hsio.read_hsc(p) for p in paths]
        cfg["channels"], cfg["height"], cfg["width"] = scenes[0].shape

    val_count = min(cfg["val_count"], max(0, len(scenes) - 1))
    train_scenes = scenes[:len(scenes) - val_count]
    val_scenes = scenes[len(scenes) - val_count:]

    sst_cfg = model.SstConfig(
        height=cfg["height"], width=cfg["width"], channels=cfg["channels"],
        n_stages=cfg["stages"], base_channels=cfg["base_channels"],
        window_size=cfg["window"], heads=cfg["heads"],
        inner_reversible=cfg["inner_reversible"])
    weights = model.init_sst_weights(sst_cfg, seed=cfg["seed"])
    disp = optics.DispersionConfig(step=cfg["d"])
    mask = _load_mask(cfg["mask"], cfg["height"], cfg["width"],
                      cfg["mask_density"], cfg["seed"] + 1)
    _save_mask(mask, out_dir / "mask.hsc")

    ckpt = out_dir / "weights.hscw"
    csv = out_dir / "metrics.csv"
    csv.unlink(missing_ok=True)
    schedule = training.Schedule(lr0=cfg["lr"], halve_every=cfg["halve_every"],
                                 epochs=cfg["epochs"])
    result = training.train(
        weights, disp, mask, train_scenes, val_scenes, schedule,
        training.LossConfig(reproj_weight=cfg["xi"]), seed=cfg["seed"],
        csv_path=csv, checkpoint_path=ckpt,
        log_fn=lambda row: print("epoch {epoch} loss {loss:.5e} psnr {psnr:.2f} "
                                 "ssim {ssim:.4f} lr {lr:.2e}".format(**row)))
    hsio.write_meta(ckpt, _weights_meta(sst_cfg, cfg["d"]))

    if result.log:
        _plot_loss_curve([r["loss"] for r in result.log], out_dir / "loss_curve.png")
    if result.diverged:
        print("error: training diverged; last good checkpoint kept", file=sys.stderr)
        return EXIT_DIVERGED
    if result.log:
        print(f"best psnr {result.best_psnr:.2f} at epoch {result.best_epoch}")
    return EXIT_OK


def _plot_loss_curve(losses: list, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(losses)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


# ---------------------------------------------------------------------------
# reconstruct / eval
# ---------------------------------------------------------------------------

RECONSTRUCT_FLAGS = [
    Flag("--weights", str, None),
    Flag("--measurement", str, None, multiple=True),
    Flag("--mask", str, None),
    Flag("--truth", str, None, multiple=True),
    Flag("--out", str, "recon_out"),
    Flag("--threads", int, None),
    Flag("--trace", bool, False, help="write per-stage residual energies"),
]


def _load_weights(path: str) -> tuple[model.SstWeights, optics.DispersionConfig]:
    meta = hsio.read_meta(path)
    sst_cfg, disp = _config_from_meta(meta)
    weights = model.init_sst_weights(sst_cfg, seed=0)
    model.load_params(weights, hsio.read_hscw(path))
    return weights, disp


def _read_measurement(path: str) -> np.ndarray:
    cube = hsio.read_hsc(path)
    if cube.shape[0] != 1:
        raise ValueError(f"measurement file must hold one channel, got {cube.shape}")
    return cube[0]


def _reconstruct_scenes(cfg: dict, want_trace: bool):
    if not cfg["weights"] or not cfg["measurement"] or not cfg["mask"]:
        raise SystemExit(EXIT_USAGE)
    weights, disp = _load_weights(cfg["weights"])
    mask = _load_mask(cfg["mask"], weights.cfg.height, weights.cfg.width, 0.5, 0)
    outputs = []
    for path in cfg["measurement"]:
        y = _read_measurement(path)
        if want_trace:
            cube, trace = model.reconstruct(y, mask, disp, weights, want_trace=True)
            outputs.append((path, cube.data, trace))
        else:
            cube = model.reconstruct(y, mask, disp, weights)
            outputs.append((path, cube.data, None))
    return weights, outputs


def cmd_reconstruct(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        weights, outputs = _reconstruct_scenes(cfg, cfg["trace"])
    except SystemExit:
        print("error: --weights, --measurement and --mask are required", file=sys.stderr)
        return EXIT_USAGE
    truths = cfg["truth"] or []
    rows = []
    for i, (path, cube, trace) in enumerate(outputs):
        stem = Path(path).stem
        hsio.write_hsc(cube.astype(np.float32), out_dir / f"{stem}_recon.hsc")
        _write_channel_pngs(cube, out_dir, f"{stem}_recon")
        if trace is not None:
            with open(out_dir / f"{stem}_trace.csv", "w", encoding="utf-8") as f:
                f.write("stage,residual_energy\n")
                for n, e in enumerate(trace.residual_energy, start=1):
                    f.write(f"{n},{e:.9e}\n")
        if i < len(truths):
            truth = hsio.read_hsc(truths[i])
            peak = float(truth.max()) or 1.0
            win = metrics.fitted_ssim_window(truth.shape[1], truth.shape[2])
            rows.append((stem, metrics.psnr(cube, truth, peak),
                         metrics.ssim_cube(cube, truth, peak, window=win)))
    _print_metric_rows(rows)
    return EXIT_OK


def _print_metric_rows(rows) -> None:
    for stem, p, s in rows:
        print(f"scene {stem}: PSNR {_fmt_db(p)} SSIM {s:.4f}")
    if rows:
        mean_p = np.mean([p for _, p, _ in rows])
        mean_s = np.mean([s for _, _, s in rows])
        print(f"mean over {len(rows)} scene(s): PSNR {_fmt_db(mean_p)} SSIM {mean_s:.4f}")


def _fmt_db(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.2f}"


def cmd_eval(cfg: dict) -> int:
    from concurrent.futures import ThreadPoolExecutor

    if not cfg["truth"] or len(cfg["truth"]) != len(cfg["measurement"] or []):
        print("error: eval needs matching --measurement and --truth lists", file=sys.stderr)
        return EXIT_USAGE
    try:
        weights, disp = _load_weights(cfg["weights"])
    except (OSError, TypeError) as e:
        print(f"error: cannot load weights: {e}", file=sys.stderr)
        return EXIT_USAGE
    mask = _load_mask(cfg["mask"], weights.cfg.height, weights.cfg.width, 0.5, 0)
    threads = cfg["threads"] or _default_threads()

    def one(pair):
        meas_path, truth_path = pair
        y = _read_measurement(meas_path)
        truth = hsio.read_hsc(truth_path)
        cube = model.reconstruct(y, mask, disp, weights).data
        peak = float(truth.max()) or 1.0
        win = metrics.fitted_ssim_window(truth.shape[1], truth.shape[2])
        return (Path(meas_path).stem, metrics.psnr(cube, truth, peak),
                metrics.ssim_cube(cube, truth, peak, window=win))

    pairs = list(zip(cfg["measurement"], cfg["truth"]))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, pairs))
    else:
        rows = [one(p) for p in pairs]
    _print_metric_rows(rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck / oracle-check
# ---------------------------------------------------------------------------

GRADCHECK_FLAGS = [
    Flag("--seed", int, 0),
    Flag("--tol", float, None, help="override the float64 tolerance for every check"),
]


def cmd_gradcheck(cfg: dict) -> int:
    seed = cfg["seed"]
    failures = 0

    print("primitive vjp suite (float64):")
    errs = gradcheck.run_primitive_suite(seed=seed)
    for name, err in errs.items():
        tol = cfg["tol"] if cfg["tol"] is not None else gradcheck.PRIMITIVE_TOL[name]
        ok = err <= tol
        failures += not ok
        print(f"  {name:20s} worst rel err {err:.3e}  tol {tol:.0e}  {'ok' if ok else 'FAIL'}")

    for dtype, tol in ((np.float64, cfg["tol"] or 1e-4), (np.float32, 1e-3)):
        print(f"model block suite ({np.dtype(dtype).name}):")
        errs = gradcheck.run_model_suite(seed=seed, dtype=dtype)
        for name, err in errs.items():
            ok = err <= tol
            failures += not ok
            print(f"  {name:24s} worst rel err {err:.3e}  tol {tol:.0e}  {'ok' if ok else 'FAIL'}")

    print("gradcheck:", "all passed" if not failures else f"{failures} check(s) FAILED")
    return EXIT_OK if not failures else EXIT_FAILURE


ORACLE_FLAGS = [
    Flag("--seed", int, 0),
    Flag("--instances", int, 20),
]


def cmd_oracle_check(cfg: dict) -> int:
    rng = np.random.default_rng(cfg["seed"])
    worst = {"modulate": 0.0, "disperse": 0.0, "integrate": 0.0, "shift_back": 0.0,
             "forward_project": 0.0, "conv2d": 0.0, "ssim": 0.0, "loss": 0.0}

    for _ in range(cfg["instances"]):
        h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        c, d = int(rng.integers(1, 5)), int(rng.integers(0, 3))
        cube = rng.standard_normal((c, h, w))
        mask = (rng.random((h, w)) < 0.5).astype(np.float64)
        disp = optics.DispersionConfig(step=d)
        modulated = optics.modulate(cube, mask)
        worst["modulate"] = max(worst["modulate"], float(np.abs(
            modulated - oracles.modulate_loops(cube, mask)).max()))
        dispersed = optics.disperse(modulated, disp)
        worst["disperse"] = max(worst["disperse"], float(np.abs(
            dispersed - oracles.disperse_loops(modulated, d)).max()))
        y = optics.integrate(dispersed)
        worst["integrate"] = max(worst["integrate"], float(np.abs(
            y - oracles.integrate_loops(dispersed)).max()))
        worst["shift_back"] = max(worst["shift_back"], float(np.abs(
            optics.shift_back(y, disp, c) - oracles.shift_back_loops(y, d, c)).max()))
        worst["forward_project"] = max(worst["forward_project"], float(np.abs(
            optics.forward_project(cube, mask, disp) - oracles.integrate_loops(
                oracles.disperse_loops(oracles.modulate_loops(cube, mask), d))).max()))

    from cassilab import autodiff as ad
    x = rng.standard_normal((2, 5, 5))
    k = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    worst["conv2d"] = float(np.abs(ad.conv2d(ad.Tensor(x), ad.Tensor(k), ad.Tensor(b)).data
                                   - oracles.conv2d_loops(x, k, b)).max())
    a_img, b_img = rng.random((16, 16)), rng.random((16, 16))
    worst["ssim"] = abs(metrics.ssim(a_img, b_img) - oracles.ssim_loops(a_img, b_img))
    truth = rng.random((3, 6, 6))
    x_out = truth + 0.1 * rng.standard_normal(truth.shape)
    mask = (rng.random((6, 6)) < 0.5).astype(np.float64)
    disp = optics.DispersionConfig(step=1)
    y = optics.forward_project(truth, mask, disp)
    from cassilab.training import LossConfig, reconstruction_loss
    got = reconstruction_loss(ad.Tensor(x_out), truth, y, mask, disp, LossConfig()).item()
    want = oracles.loss_loops(x_out, truth, optics.forward_project(x_out, mask, disp),
                              y, 0.2, True)
    worst["loss"] = abs(got - want) / max(abs(want), 1e-12)

    tol = {"conv2d": 1e-6, "ssim": 1e-6, "loss": 1e-6}
    failures = 0
    for name, err in worst.items():
        t = tol.get(name, 1e-12)
        ok = err <= t
        failures += not ok
        print(f"  {name:16s} worst diff {err:.3e}  tol {t:.0e}  {'ok' if ok else 'FAIL'}")
    print("oracle-check:", "all passed" if not failures else f"{failures} check(s) FAILED")
    return EXIT_OK if not failures else EXIT_FAILURE


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

COMMANDS = {
    "simulate": (SIMULATE_FLAGS, cmd_simulate, "render a coded measurement from a scene"),
    "train": (TRAIN_FLAGS, cmd_train, "train a reconstruction model"),
    "reconstruct": (RECONSTRUCT_FLAGS, cmd_reconstruct, "invert measurements with a checkpoint"),
    "eval": (RECONSTRUCT_FLAGS, cmd_eval, "report PSNR/SSIM against ground truth"),
    "gradcheck": (GRADCHECK_FLAGS, cmd_gradcheck, "finite-difference verification suites"),
    "oracle-check": (ORACLE_FLAGS, cmd_oracle_check, "loop-oracle verification suites"),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cassilab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (flags, _, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        _add_flags(p, flags)
    args = parser.parse_args(argv)
    flags, handler, _ = COMMANDS[args.command]
    cfg = _resolve(parser, args, flags)
    _echo_config(args.command, cfg)
    try:
        return handler(cfg)
    except (ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
