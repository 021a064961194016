#!/usr/bin/env python3
"""Epochs-to-threshold for entropy-prior vs uniform-random mask initialization.

Each seed trains two paired runs on the same train split with the same
batch order; only the initial sensor layout differs.
"""
import argparse
import csv
import sys

import numpy as np

from sensorplace.entropy import entropy_field
from sensorplace.pipeline import build_config, load_config, split
from sensorplace.prior import init_mask_params, random_mask_params, sensor_prior
from sensorplace.selector import TrainConfig, train
from sensorplace.synth import generate


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="run config file (default: built-in defaults)")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--threshold", type=float, action="append",
                    help="standardized train MSE threshold; repeatable (default 0.015)")
    ap.add_argument("--csv", help="write per-epoch MSE curves here")
    args = ap.parse_args(argv)
    thresholds = args.threshold or [0.015]

    cfg = load_config(args.config) if args.config else build_config({})
    train_s, _ = split(generate(cfg.synth), cfg.split_fraction)
    prior = sensor_prior(entropy_field(train_s, cfg.entropy), cfg.tau)

    curves = []
    epochs = {t: {"entropy": [], "random": []} for t in thresholds}
    for s in range(args.seeds):
        tcfg = TrainConfig(**{**cfg.train.__dict__, "seed": s})
        init = init_mask_params(prior, cfg.sensors, seed=s)
        for arm, start in (("entropy", init), ("random", random_mask_params(init, s))):
            rep = train(train_s, start, tcfg)
            curves += [(s, arm, h["epoch"], h["mse"]) for h in rep.history]
            for t in thresholds:
                epochs[t][arm].append(rep.epochs_to(t))
        print(f"seed {s}: " + "  ".join(
            f"mse<={t:g}: entropy {epochs[t]['entropy'][-1]:g} random {epochs[t]['random'][-1]:g}"
            for t in thresholds), flush=True)

    for t in thresholds:
        e, r = np.array(epochs[t]["entropy"]), np.array(epochs[t]["random"])
        print(f"threshold {t:g}: median entropy {np.median(e):g}, random {np.median(r):g}; "
              f"entropy faster in {(e < r).sum()}, ties {(e == r).sum()}, slower {(e > r).sum()}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "init", "epoch", "mse"])
            w.writerows(curves)
    return 0


if __name__ == "__main__":
    sys.exit(main())
