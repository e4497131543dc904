#!/usr/bin/env python3
"""Ablations of the reversible machinery at desk scale.

1. Reversible prior: a two-stage model (re-projection between stages) vs a
   single-stage model widened to at least the same parameter count.
2. Reversible loss: weight 0.2 vs 0, with the windowed trend of the
   measurement-space term.
"""

import argparse

import numpy as np

from cassilab import hsio, model, optics, training


def windowed_means(values, width=20):
    return [float(np.mean(values[i:i + width])) for i in range(0, len(values), width)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--lr", type=float, default=4e-3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    height = width = 32
    channels = 8
    scenes = [hsio.generate_scene(hsio.SyntheticSceneSpec(
        kind="checker-spectra", height=height, width=width, channels=channels, seed=i))
        for i in range(8)]
    train_scenes, val_scenes = scenes[:6], scenes[6:]
    mask = hsio.generate_mask(height, width, 0.5, seed=100)
    disp = optics.DispersionConfig(step=1)
    sched = training.Schedule(lr0=args.lr, halve_every=20, epochs=args.epochs)

    def run(weights, xi):
        return training.train(weights, disp, mask, train_scenes, val_scenes, sched,
                              training.LossConfig(reproj_weight=xi), seed=args.seed)

    print("== reversible prior (two stages vs matched single stage) ==")
    cfg2 = model.SstConfig(height=height, width=width, channels=channels,
                           n_stages=2, base_channels=16)
    w2 = model.init_sst_weights(cfg2, seed=args.seed)
    cfg1 = model.match_param_budget(cfg2, model.param_count(w2))
    w1 = model.init_sst_weights(cfg1, seed=args.seed)
    res2 = run(w2, 0.2)
    res1 = run(w1, 0.2)
    print(f"n=2 reversible      params {model.param_count(w2):>8d}  PSNR {res2.best_psnr:6.2f}")
    print(f"n=1 matched budget  params {model.param_count(w1):>8d}  PSNR {res1.best_psnr:6.2f}")

    print("== reversible loss (weight 0.2 vs 0) ==")
    cfg = model.SstConfig(height=height, width=width, channels=channels,
                          n_stages=1, base_channels=16)
    for xi in (0.2, 0.0):
        res = run(model.init_sst_weights(cfg, seed=args.seed), xi)
        wins = windowed_means([r["reproj_term"] for r in res.iteration_log])
        mono = all(b < a for a, b in zip(wins, wins[1:]))
        print(f"xi={xi:<4} PSNR {res.best_psnr:6.2f}  reversible-term windows "
              f"monotone={mono}  first {wins[0]:.4f} last {wins[-1]:.4f}")


if __name__ == "__main__":
    main()
