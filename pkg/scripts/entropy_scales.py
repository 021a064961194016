#!/usr/bin/env python3
"""Entropy field at several scales: band vs outside medians, optional PGM heatmaps."""
import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from sensorplace import io
from sensorplace.entropy import entropy_field
from sensorplace.pipeline import build_config, load_config, split
from sensorplace.synth import generate


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--scales", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--ordering", default=None, help="raster, s-curve or spiral")
    ap.add_argument("--out", type=Path, help="directory for entropy_s<scale>.pgm")
    args = ap.parse_args(argv)

    cfg = load_config(args.config) if args.config else build_config({})
    train_s, _ = split(generate(cfg.synth), cfg.split_fraction)
    band = np.zeros(train_s.land.shape, bool)
    band[slice(*cfg.synth.front_band)] = True
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)

    print(f"{'scale':>5} {'band':>8} {'outside':>8} {'gap':>7}")
    for scale in args.scales:
        ecfg = dataclasses.replace(cfg.entropy, scale=scale, ordering=args.ordering or cfg.entropy.ordering)
        ef = entropy_field(train_s, ecfg)
        H = ef.H.values
        inside, outside = np.median(H[band & ef.valid]), np.median(H[~band & ef.valid])
        print(f"{scale:5d} {inside:8.4f} {outside:8.4f} {inside - outside:7.4f}", flush=True)
        if args.out:
            io.write_pgm(args.out / f"entropy_s{scale}.pgm", H, ef.valid)
    return 0


if __name__ == "__main__":
    sys.exit(main())
