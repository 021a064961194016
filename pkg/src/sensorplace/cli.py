"""Command-line entry point: ``sensorplace <subcommand> [options]``.

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .errors import SensorPlaceError
from .pipeline import METHODS

SUBCOMMANDS = ("gen", "entropy", "place", "train", "baseline", "eval", "report", "run")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value config file")
    common.add_argument("--out", type=Path, help="output directory (default: config 'out')")
    common.add_argument("--seed", type=int, help="global seed (non-negative)")
    common.add_argument("--method", choices=METHODS, action="append",
                        help="method(s); repeatable. train/baseline/eval take one")
    common.add_argument("--sensors", type=int, help="sensor budget K")
    common.add_argument("--scale", type=int, help="entropy scale L'")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sensorplace", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "gen": "generate (or copy) the field series to data.fsr",
        "entropy": "estimate the entropy field",
        "place": "build the sensor prior and the initial mask",
        "train": "train st-mask or concrete selector",
        "baseline": "fit climatology or PCA-QR",
        "eval": "evaluate one method on the test split",
        "report": "assemble report.txt and report.csv",
        "run": "run the whole pipeline",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _config(args) -> pipeline.RunConfig:
    overrides = {"seed": args.seed, "scale": args.scale, "sensors": args.sensors}
    if args.command in ("run", "report") and args.method:
        overrides["methods"] = args.method
    if args.out is not None:
        overrides["out"] = str(args.out)
    if args.config is not None:
        return pipeline.load_config(args.config, **overrides)
    return pipeline.build_config({}, **overrides)


def _single_method(args, allowed) -> str:
    if not args.method or len(args.method) != 1 or args.method[0] not in allowed:
        raise pipeline.ConfigError(f"{args.command} needs exactly one --method from {allowed}")
    return args.method[0]


def dispatch(args) -> None:
    cfg = _config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cmd = args.command
    if cmd == "run":
        pipeline.run_pipeline(cfg, out)
    elif cmd == "gen":
        pipeline.stage_gen(cfg, out)
    elif cmd == "entropy":
        pipeline.stage_entropy(cfg, out)
    elif cmd == "place":
        pipeline.stage_place(cfg, out)
    elif cmd == "train":
        pipeline.stage_train(cfg, out, _single_method(args, ("st-mask", "concrete")))
    elif cmd == "baseline":
        pipeline.stage_baseline(cfg, out, _single_method(args, ("climate", "pca-qr")), args.sensors)
    elif cmd == "eval":
        pipeline.stage_eval(cfg, out, _single_method(args, METHODS))
    elif cmd == "report":
        pipeline.stage_report(cfg, out)
        sys.stdout.write((out / "report.txt").read_text())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        dispatch(args)
    except SensorPlaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
