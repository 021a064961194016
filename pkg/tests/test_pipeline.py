import shutil

import numpy as np
import pytest

from conftest import make_series
from sensorplace import cli, io
from sensorplace.errors import ConfigError, DataError, InvalidArgument
from sensorplace.metrics import read_table_csv
from sensorplace.pipeline import (
    build_config,
    load_config,
    parse_config_text,
    read_manifest,
    run_pipeline,
    split,
    stage_seed,
    verify_manifest,
)

SMALL_CONFIG = """
# desk-scale smoke configuration
seed = 3
sensors = 12
methods = climate, pca-qr, st-mask
synth.rows = 16
synth.cols = 16
synth.front_band = 6, 10
entropy.patch_size = 4
entropy.scale = 4
entropy.patch_stride = 2
entropy.bin_stride = 2
entropy.ensemble = 2
train.epochs = 3
"""


@pytest.fixture(scope="module")
def config_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "small.cfg"
    p.write_text(SMALL_CONFIG)
    return p


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, config_file):
    out = tmp_path_factory.mktemp("run")
    assert cli.main(["run", "--config", str(config_file), "--out", str(out)]) == 0
    return out


# split and config


@pytest.mark.parametrize("T,f,sizes", [(10, 0.8, (8, 2)), (5, 0.8, (4, 1)), (10, 0.99, (9, 1))])
def test_split_examples(T, f, sizes):
    s = make_series(np.arange(T, dtype=float)[:, None, None] * np.ones((T, 1, 1)))
    a, b = split(s, f)
    assert (len(a), len(b)) == sizes
    assert a.stamps[-1, 1] + 1 == b.stamps[0, 1]


def test_split_rejects_empty_side():
    s = make_series(np.zeros((3, 1, 1)))
    with pytest.raises(InvalidArgument):
        split(s, 0.2)


def test_parse_config_text():
    pairs = parse_config_text("a = 1  # comment\n\n# skip\nb.c=x y\n")
    assert pairs == {"a": "1", "b.c": "x y"}
    with pytest.raises(ConfigError):
        parse_config_text("no equals sign")


def test_build_config_sections_and_seeds():
    cfg = build_config(parse_config_text(SMALL_CONFIG))
    assert cfg.seed == 3 and cfg.sensors == 12
    assert cfg.methods == ("climate", "pca-qr", "st-mask")
    assert cfg.synth.front_band == (6, 10) and cfg.entropy.ensemble == 2
    assert cfg.synth.seed == stage_seed(3, "synth")
    assert cfg.train.seed == stage_seed(3, "train") != cfg.entropy.seed
    assert cfg.concrete.selector == "concrete"
    explicit = build_config({"seed": "3", "synth.seed": "11"})
    assert explicit.synth.seed == 11
    over = build_config({"seed": "3"}, seed=4, scale=2, sensors=5)
    assert over.seed == 4 and over.entropy.scale == 2 and over.sensors == 5
    assert over.synth.seed == stage_seed(4, "synth")


@pytest.mark.parametrize("pairs", [
    {"split_fraction": "1.0"}, {"methods": "climate,unet"}, {"bogus": "1"},
    {"train.nope": "1"}, {"nosection.x": "1"}, {"sensors": "many"}, {"entropy.scale": "99"},
])
def test_bad_config(pairs):
    with pytest.raises(ConfigError):
        build_config(pairs)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")
    assert cli.main(["run", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o")]) == 2


def test_stage_seed_is_stable():
    assert stage_seed(0, "synth") == stage_seed(0, "synth")
    assert stage_seed(0, "synth") != stage_seed(1, "synth")
    assert 0 <= stage_seed(2**63, "train") < 2**63


# end to end


def test_run_writes_artifacts(run_dir):
    for name in ("data.fsr", "entropy.csv", "entropy.pgm", "entropy.pgm.txt", "prior.csv",
                 "sensors_prior.csv", "sensors_st-mask.csv", "sensors_pca-qr.csv",
                 "checkpoint_st-mask.ckpt", "pod.ckpt", "climate.ckpt", "report.txt",
                 "report.csv", "bias_st-mask.csv", "rmse_pca-qr.pgm", "MANIFEST"):
        assert (run_dir / name).exists(), name
    rows = io.read_cells_csv(run_dir / "sensors_st-mask.csv")
    table = {m: (k, b, r) for m, k, b, r in read_table_csv(run_dir / "report.csv")}
    assert list(table) == ["climate", "pca-qr", "st-mask"]
    assert table["climate"][0] == 0
    assert table["st-mask"][0] == table["pca-qr"][0] == len(rows)
    assert "Straight-through mask" in (run_dir / "report.txt").read_text()
    assert (run_dir / "MANIFEST").read_text().startswith("status=ok")
    assert verify_manifest(run_dir) == []


def test_pgm_heatmap(run_dir):
    img = io.read_pgm(run_dir / "entropy.pgm")
    meta = dict(line.split("=", 1) for line in (run_dir / "entropy.pgm.txt").read_text().splitlines())
    lo, hi = float(meta["min"]), float(meta["max"])
    H = io.read_field_csv(run_dir / "entropy.csv").values
    assert img.shape == (16, 16)
    assert lo == pytest.approx(np.nanmin(H), abs=1e-6) and hi == pytest.approx(np.nanmax(H), abs=1e-6)
    assert (img[np.isnan(H)] == 0).all() and (img[~np.isnan(H)] >= 1).all()


def test_rerun_is_byte_identical(run_dir, config_file, tmp_path):
    before = (run_dir / "report.csv").read_bytes()
    sums = read_manifest(run_dir)
    assert cli.main(["run", "--config", str(config_file), "--out", str(run_dir)]) == 0
    assert (run_dir / "report.csv").read_bytes() == before
    assert read_manifest(run_dir) == sums
    other = tmp_path / "again"
    assert cli.main(["run", "--config", str(config_file), "--out", str(other)]) == 0
    assert (other / "report.csv").read_bytes() == before


def test_manifest_detects_tampering(run_dir, tmp_path):
    copy = tmp_path / "copy"
    shutil.copytree(run_dir, copy)
    with open(copy / "entropy.csv", "a") as fh:
        fh.write("\n")
    (copy / "pod.ckpt").unlink()
    assert sorted(verify_manifest(copy)) == ["entropy.csv", "pod.ckpt"]


def test_subcommands_compose_to_run(run_dir, config_file, tmp_path, capsys):
    out = tmp_path / "staged"
    base = ["--config", str(config_file), "--out", str(out)]
    steps = [
        ["gen"], ["entropy"], ["place"],
        ["train", "--method", "st-mask"],
        ["baseline", "--method", "climate"], ["baseline", "--method", "pca-qr"],
        ["eval", "--method", "climate"], ["eval", "--method", "pca-qr"], ["eval", "--method", "st-mask"],
        ["report"],
    ]
    for step in steps:
        assert cli.main([step[0]] + base + step[1:]) == 0, step
    assert "MED(RMSE)" in capsys.readouterr().out
    for name, digest in read_manifest(run_dir).items():
        assert io.sha256_file(out / name) == digest, name


def test_missing_input_fails_without_report(tmp_path, config_file):
    out = tmp_path / "r"
    cfg = tmp_path / "in.cfg"
    cfg.write_text(config_file.read_text() + f"\ninput = {tmp_path / 'absent.fsr'}\n")
    code = cli.main(["run", "--config", str(cfg), "--out", str(out)])
    assert code == 3
    assert not (out / "report.csv").exists()
    assert (out / "MANIFEST").read_text().startswith("status=failed:gen")


def test_input_file_is_used(tmp_path, run_dir):
    out = tmp_path / "r"
    cfg = build_config(parse_config_text(SMALL_CONFIG + f"\ninput = {run_dir / 'data.fsr'}\n"))
    run_pipeline(cfg, out)
    assert (out / "data.fsr").read_bytes() == (run_dir / "data.fsr").read_bytes()


def test_stage_error_names_stage(tmp_path):
    cfg = build_config(parse_config_text(SMALL_CONFIG + f"\ninput = {tmp_path / 'x.fsr'}\n"))
    with pytest.raises(DataError, match=r"^\[gen\] input file not found"):
        run_pipeline(cfg, tmp_path / "r")


def test_cli_single_method_required(tmp_path, config_file):
    code = cli.main(["train", "--config", str(config_file), "--out", str(tmp_path), "--method", "climate"])
    assert code == 2
