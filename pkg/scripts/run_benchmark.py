#!/usr/bin/env python3
"""Run the full pipeline over several seeds and print the method table for each."""
import argparse
import sys
import time
from pathlib import Path

import numpy as np

from sensorplace.metrics import read_table_csv
from sensorplace.pipeline import build_config, load_config, run_pipeline


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--methods", default=None, help="comma-separated, e.g. climate,pca-qr,st-mask,concrete")
    ap.add_argument("--out", type=Path, default=Path("bench"))
    args = ap.parse_args(argv)

    rmse: dict[str, list[float]] = {}
    for seed in args.seeds:
        over = {"seed": seed}
        if args.methods:
            over["methods"] = tuple(m.strip() for m in args.methods.split(","))
        cfg = load_config(args.config, **over) if args.config else build_config({}, **over)
        out = args.out / f"seed{seed}"
        t0 = time.perf_counter()
        run_pipeline(cfg, out)
        print(f"seed {seed} ({time.perf_counter() - t0:.0f}s)")
        print((out / "report.txt").read_text())
        for method, _, _, r in read_table_csv(out / "report.csv"):
            rmse.setdefault(method, []).append(r)
    if len(args.seeds) > 1:
        for method, vals in rmse.items():
            print(f"{method:10s} MED(RMSE) over seeds: mean {np.mean(vals):.4f}, sd {np.std(vals, ddof=1):.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
