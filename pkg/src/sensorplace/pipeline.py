"""End-to-end pipeline with explicit file handoffs between stages.

Stages, in run order: gen, entropy, place, train, baseline, eval, report.
Every stage reads its inputs from the output directory and writes its
artifacts there, so the stages can be run one at a time from the CLI and
compose to the same files as ``run_pipeline``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .baselines import (
    Climatology,
    fit_climatology,
    fit_pod,
    load_pod,
    pod_reconstruct_series,
    save_pod,
)
from .entropy import EntropyConfig, EntropyField, entropy_field
from .errors import ConfigError, DataError, InvalidArgument, SensorPlaceError
from .fields import Field, FieldSeries
from .metrics import format_table, read_table_csv, summarize, write_series_csv, write_table_csv
from .prior import DEFAULT_TAU, MaskParams, init_mask_params, random_mask_params, sample_sensors, sensor_prior
from .selector import (
    TrainConfig,
    load_checkpoint,
    reconstruct_series,
    save_checkpoint,
    train,
    write_report_csv,
)
from .synth import SynthConfig, generate

log = logging.getLogger(__name__)

METHODS = ("climate", "pca-qr", "st-mask", "concrete")
DISPLAY_NAMES = {
    "climate": "Climate",
    "pca-qr": "PCA with QR",
    "st-mask": "Straight-through mask",
    "concrete": "Concrete selector",
}
INIT_MODES = ("sampled", "top", "random")
MANIFEST = "MANIFEST"
DATA_FILE = "data.fsr"


@dataclass(frozen=True)
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    entropy: EntropyConfig = field(default_factory=EntropyConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    concrete: TrainConfig = field(default_factory=lambda: TrainConfig(selector="concrete", lambda_max=0.0, step_size=0.05))
    split_fraction: float = 0.8
    methods: tuple[str, ...] = ("climate", "pca-qr", "st-mask")
    out: str = "run"
    seed: int = 0
    input: str = ""
    sensors: int = 60
    tau: float = DEFAULT_TAU
    init: str = "sampled"

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError(f"split_fraction must lie in (0, 1), got {self.split_fraction}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        if self.sensors < 1:
            raise ConfigError("sensors must be >= 1")
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if self.init not in INIT_MODES:
            raise ConfigError(f"init must be one of {INIT_MODES}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


# --------------------------------------------------------------------------
# config parsing


def _convert(raw: str, default, key: str):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if default and isinstance(default[0], int):
                return tuple(int(s) for s in items)
            return tuple(items)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def _apply(obj, updates: dict[str, str], prefix: str):
    known = {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}
    kwargs = {}
    for k, raw in updates.items():
        if k not in known:
            raise ConfigError(f"unknown config key {prefix}{k}")
        kwargs[k] = _convert(raw, known[k], prefix + k)
    try:
        return dataclasses.replace(obj, **kwargs)
    except InvalidArgument as exc:
        raise ConfigError(f"{prefix.rstrip('.') or 'config'}: {exc}") from None


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def stage_seed(seed: int, stage: str) -> int:
    """Sub-seed for a named stage: the first 63 bits of sha256("seed/stage")."""
    digest = hashlib.sha256(f"{seed}/{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def build_config(pairs: dict[str, str] | None = None, **overrides) -> RunConfig:
    """RunConfig from key=value pairs; dotted keys address synth/entropy/train/concrete.

    Sub-config seeds not set explicitly are derived from the global seed.
    ``overrides`` (CLI flags) win over the pairs.
    """
    pairs = dict(pairs or {})
    groups: dict[str, dict[str, str]] = {"synth": {}, "entropy": {}, "train": {}, "concrete": {}}
    top: dict[str, str] = {}
    for k, v in pairs.items():
        head, _, rest = k.partition(".")
        if rest:
            if head not in groups:
                raise ConfigError(f"unknown config section {head!r}")
            groups[head][rest] = v
        else:
            top[k] = v
    for k, v in overrides.items():
        if v is None:
            continue
        if k == "scale":
            groups["entropy"]["scale"] = str(v)
        else:
            top[k] = ",".join(v) if isinstance(v, (list, tuple)) else str(v)
    base = RunConfig()
    seed = int(_convert(top.get("seed", "0"), 0, "seed"))
    subs = {}
    for name, updates in groups.items():
        if "seed" not in updates:
            updates = {**updates, "seed": str(stage_seed(seed, name))}
        subs[name] = _apply(getattr(base, name), updates, name + ".")
    if "selector" not in groups["concrete"]:
        subs["concrete"] = dataclasses.replace(subs["concrete"], selector="concrete")
    cfg = _apply(base, top, "")
    return dataclasses.replace(cfg, **subs)


def load_config(path, **overrides) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return build_config(parse_config_text(p.read_text()), **overrides)


# --------------------------------------------------------------------------
# stages


def split(series: FieldSeries, fraction: float) -> tuple[FieldSeries, FieldSeries]:
    """Chronological split at floor(fraction * T)."""
    T = len(series)
    cut = int(np.floor(fraction * T))
    if cut < 1 or cut >= T:
        raise InvalidArgument(f"split of {T} steps at fraction {fraction} leaves an empty side")
    return series[:cut], series[cut:]


def _load_split(cfg: RunConfig, out: Path) -> tuple[FieldSeries, FieldSeries]:
    return split(io.read_fsr1(out / DATA_FILE), cfg.split_fraction)


def stage_gen(cfg: RunConfig, out: Path) -> list[Path]:
    dest = out / DATA_FILE
    if cfg.input:
        src = Path(cfg.input)
        if not src.exists():
            raise DataError(f"input file not found: {src}")
        series = io.read_fsr1(src)
    else:
        series = generate(cfg.synth)
    io.write_fsr1(dest, series)
    return [dest]


def stage_entropy(cfg: RunConfig, out: Path) -> list[Path]:
    train_s, _ = _load_split(cfg, out)
    ef = entropy_field(train_s, cfg.entropy)
    values = np.where(ef.valid, ef.H.values, np.nan)
    io.write_field_csv(out / "entropy.csv", Field(values, ef.land))
    io.write_pgm(out / "entropy.pgm", values, ef.valid)
    return [out / "entropy.csv", out / "entropy.pgm", out / "entropy.pgm.txt"]


def _entropy_from_csv(path: Path, land: np.ndarray) -> EntropyField:
    fld = io.read_field_csv(path)
    valid = np.isfinite(fld.values) & ~land
    return EntropyField(Field(fld.values, land), valid, scale=0, ensemble_size=0)


def stage_place(cfg: RunConfig, out: Path) -> list[Path]:
    train_s, _ = _load_split(cfg, out)
    ef = _entropy_from_csv(out / "entropy.csv", train_s.land)
    prior = sensor_prior(ef, cfg.tau)
    io.write_field_csv(out / "prior.csv", prior.p)
    io.write_pgm(out / "prior.pgm", prior.p.values, ~prior.p.land)
    sseed = stage_seed(cfg.seed, "place")
    sensors = sample_sensors(prior, cfg.sensors, sseed)
    io.write_cells_csv(out / "sensors_prior.csv", sensors.locations)
    if cfg.init == "top":
        init = init_mask_params(prior, cfg.sensors)
    else:
        init = init_mask_params(prior, cfg.sensors, seed=sseed)
        if cfg.init == "random":
            init = random_mask_params(init, stage_seed(cfg.seed, "random-init"))
    io.write_checkpoint(out / "mask_init.ckpt", {
        "LOGITS": init.w.values,
        "LAND": init.land.astype(np.float64),
    })
    return [out / "prior.csv", out / "prior.pgm", out / "prior.pgm.txt",
            out / "sensors_prior.csv", out / "mask_init.ckpt"]


def _load_init(out: Path) -> MaskParams:
    s = io.read_checkpoint(out / "mask_init.ckpt")
    land = s["LAND"].astype(bool)
    return MaskParams(Field(s["LOGITS"], land))


def _sensor_cells(mask: np.ndarray) -> list[tuple[int, int]]:
    return [(int(r), int(c)) for r, c in np.argwhere(mask > 0)]


def stage_train(cfg: RunConfig, out: Path, method: str) -> list[Path]:
    if method not in ("st-mask", "concrete"):
        raise ConfigError(f"train stage handles st-mask and concrete, not {method!r}")
    train_s, _ = _load_split(cfg, out)
    init = _load_init(out)
    tcfg = cfg.train if method == "st-mask" else cfg.concrete
    report = train(train_s, init, tcfg)
    log.info("%s: %d sensors, final mse %.4g, %.1fs", method, report.sensor_count,
             report.history[-1]["mse"], report.wall_time)
    paths = [out / f"checkpoint_{method}.ckpt", out / f"train_{method}.csv", out / f"sensors_{method}.csv"]
    save_checkpoint(paths[0], report)
    write_report_csv(paths[1], report)
    io.write_cells_csv(paths[2], _sensor_cells(report.mask))
    return paths


def pca_budget(cfg: RunConfig, out: Path, sensors: int | None = None) -> int:
    """Sensor budget for PCA-QR: explicit, else the trained mask's count, else the config."""
    if sensors:
        return sensors
    for method in ("st-mask", "concrete"):
        p = out / f"sensors_{method}.csv"
        if method in cfg.methods and p.exists():
            return len(io.read_cells_csv(p))
    return cfg.sensors


def stage_baseline(cfg: RunConfig, out: Path, method: str, sensors: int | None = None) -> list[Path]:
    train_s, _ = _load_split(cfg, out)
    if method == "climate":
        clim = fit_climatology(train_s)
        path = out / "climate.ckpt"
        io.write_checkpoint(path, {
            "DAY_MEAN": clim.day_mean,
            "COUNTS": clim.counts.astype(np.float64),
            "LAND": clim.land.astype(np.float64),
        })
        return [path]
    if method == "pca-qr":
        r = pca_budget(cfg, out, sensors)
        basis = fit_pod(train_s, r)
        paths = [out / "pod.ckpt", out / "sensors_pca-qr.csv"]
        save_pod(paths[0], basis)
        io.write_cells_csv(paths[1], basis.sensor_cells())
        return paths
    raise ConfigError(f"baseline stage handles climate and pca-qr, not {method!r}")


def reconstruct_method(cfg: RunConfig, out: Path, method: str, test: FieldSeries) -> tuple[FieldSeries, int]:
    if method == "climate":
        s = io.read_checkpoint(out / "climate.ckpt")
        clim = Climatology(s["DAY_MEAN"], s["COUNTS"].astype(np.int64), s["LAND"].astype(bool))
        return clim.predict(test.stamps), 0
    if method == "pca-qr":
        basis = load_pod(out / "pod.ckpt")
        return pod_reconstruct_series(basis, test), len(basis.sensors)
    if method in ("st-mask", "concrete"):
        decoder, mask, _ = load_checkpoint(out / f"checkpoint_{method}.ckpt")
        return reconstruct_series(decoder, mask, test), int(mask.sum())
    raise ConfigError(f"unknown method {method!r}")


def stage_eval(cfg: RunConfig, out: Path, method: str) -> list[Path]:
    _, test = _load_split(cfg, out)
    recon, count = reconstruct_method(cfg, out, method, test)
    rep = summarize(method, count, recon, test)
    paths = []
    for name, fld in (("bias", rep.bias_field), ("rmse", rep.rmse_field)):
        io.write_field_csv(out / f"{name}_{method}.csv", fld)
        io.write_pgm(out / f"{name}_{method}.pgm", fld.values, fld.sea)
        paths += [out / f"{name}_{method}.csv", out / f"{name}_{method}.pgm", out / f"{name}_{method}.pgm.txt"]
    write_series_csv(out / f"series_{method}.csv", rep, test.stamps)
    write_table_csv(out / f"metrics_{method}.csv", [(method, rep.sensor_count, rep.med_bias, rep.med_rmse)])
    return paths + [out / f"series_{method}.csv", out / f"metrics_{method}.csv"]


def stage_report(cfg: RunConfig, out: Path) -> list[Path]:
    rows = []
    for method in cfg.methods:
        p = out / f"metrics_{method}.csv"
        if not p.exists():
            raise DataError(f"missing metrics for {method}: {p}")
        rows += read_table_csv(p)
    write_table_csv(out / "report.csv", rows)
    text = format_table([(DISPLAY_NAMES[m], k, b, r) for m, k, b, r in rows])
    (out / "report.txt").write_text(text)
    return [out / "report.csv", out / "report.txt"]


# --------------------------------------------------------------------------
# manifest and orchestration


def read_manifest(out: Path) -> dict[str, str]:
    p = Path(out) / MANIFEST
    if not p.exists():
        return {}
    sums = {}
    for line in p.read_text().splitlines():
        if "  " in line and "=" not in line.split("  ", 1)[0]:
            digest, name = line.split("  ", 1)
            sums[name] = digest
    return sums


def write_manifest(out: Path, files: list[Path], status: str) -> dict[str, str]:
    sums = {}
    for f in sorted(set(files)):
        if f.exists():
            sums[f.relative_to(out).as_posix()] = io.sha256_file(f)
    lines = [f"status={status}"] + [f"{d}  {n}" for n, d in sorted(sums.items())]
    (out / MANIFEST).write_text("\n".join(lines) + "\n")
    return sums


def verify_manifest(out) -> list[str]:
    """Names of recorded artifacts whose current checksum differs (or that are missing)."""
    out = Path(out)
    bad = []
    for name, digest in read_manifest(out).items():
        p = out / name
        if not p.exists() or io.sha256_file(p) != digest:
            bad.append(name)
    return bad


def pipeline_steps(cfg: RunConfig):
    steps = [("gen", stage_gen, ()), ("entropy", stage_entropy, ()), ("place", stage_place, ())]
    for m in ("st-mask", "concrete"):
        if m in cfg.methods:
            steps.append((f"train:{m}", stage_train, (m,)))
    for m in ("climate", "pca-qr"):
        if m in cfg.methods:
            steps.append((f"baseline:{m}", stage_baseline, (m,)))
    steps += [(f"eval:{m}", stage_eval, (m,)) for m in cfg.methods]
    steps.append(("report", stage_report, ()))
    return steps


def run_pipeline(cfg: RunConfig, out=None) -> dict[str, str]:
    """Run every stage; return the artifact checksums recorded in MANIFEST.

    A failing stage re-raises with the stage name after the MANIFEST records
    the partial artifacts and a failed status. When a previous MANIFEST
    exists, changed checksums are logged.
    """
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    previous = read_manifest(out)
    files: list[Path] = []
    for name, fn, args in pipeline_steps(cfg):
        log.info("stage %s", name)
        try:
            files += fn(cfg, out, *args)
        except SensorPlaceError as exc:
            write_manifest(out, files, f"failed:{name}")
            exc.args = (f"[{name}] {exc}",)
            raise
    sums = write_manifest(out, files, "ok")
    if previous:
        changed = sorted(k for k in sums if previous.get(k) not in (None, sums[k]))
        if changed:
            log.warning("rerun changed %d artifacts: %s", len(changed), ", ".join(changed))
        else:
            log.info("rerun reproduced all %d recorded checksums", len(sums))
    return sums
