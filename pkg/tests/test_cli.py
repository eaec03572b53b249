import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from flrn.cli import main
from flrn.funcspace import Dataset, make_uniform_grid, read_dataset_csv, write_dataset_csv


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def small_dir(tmp_path):
    out = tmp_path / "d"
    assert main(["generate", "--outdir", str(out), "--n-total", "70", "--n-train", "50",
                 "--n-modes", "100", "--grid-size", "64", "--seed", "5"]) == 0
    return out


def test_generate_defaults(tmp_path):
    assert main(["generate", "--outdir", str(tmp_path)]) == 0
    assert len(rows(tmp_path / "train.csv")) == 551
    assert len(rows(tmp_path / "test.csv")) == 101
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "generate"
    assert set(manifest["files"]) == {str(tmp_path / "train.csv"), str(tmp_path / "test.csv")}
    assert manifest["config"]["n_modes"] == 500 and manifest["seeds"]["master"] == 20240101


def test_generate_noiseless(tmp_path):
    assert main(["generate", "--outdir", str(tmp_path), "--sigma2", "0", "--n-total", "30",
                 "--n-train", "20", "--grid-size", "32"]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["diagnostics"]["empirical_noise_variance"] == 0.0


def test_generate_byte_identical(tmp_path):
    args = ["--n-total", "40", "--n-train", "30", "--grid-size", "32", "--seed", "77"]
    assert main(["generate", "--outdir", str(tmp_path / "a"), *args]) == 0
    assert main(["generate", "--outdir", str(tmp_path / "b"), *args]) == 0
    for name in ("train.csv", "test.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_generate_bad_split(tmp_path):
    assert main(["generate", "--outdir", str(tmp_path), "--n-total", "10", "--n-train", "10"]) == 2


def test_fit_full_vs_nystrom_m_equals_n(small_dir, tmp_path):
    train, test = str(small_dir / "train.csv"), str(small_dir / "test.csv")
    full, nys = str(tmp_path / "full.csv"), str(tmp_path / "nys.csv")
    assert main(["fit", "--train", train, "--lambda", "1e-5", "--jitter", "off", "--out", full]) == 0
    assert main(["fit", "--train", train, "--method", "nystrom", "--m", "50", "--seed", "3",
                 "--lambda", "1e-5", "--jitter", "off", "--out", nys]) == 0
    p1, p2 = str(tmp_path / "p1.csv"), str(tmp_path / "p2.csv")
    assert main(["predict", "--train", train, "--model", full, "--data", test, "--out", p1]) == 0
    assert main(["predict", "--train", train, "--model", nys, "--data", test, "--out", p2]) == 0
    a = np.array([float(r[1]) for r in rows(p1)[1:]])
    b = np.array([float(r[1]) for r in rows(p2)[1:]])
    assert rows(p1)[0] == ["index", "prediction"] and a.size == 20
    assert np.max(np.abs(a - b)) <= 1e-8 * np.max(np.abs(a))
    assert (tmp_path / "full.csv.manifest.json").exists()


def test_fit_usage_errors(small_dir, tmp_path):
    train = str(small_dir / "train.csv")
    out = str(tmp_path / "m.csv")
    assert main(["fit", "--train", train, "--lambda", "0", "--out", out]) == 2
    assert main(["fit", "--train", train, "--lambda", "-1", "--out", out]) == 2
    assert main(["fit", "--train", train, "--method", "nystrom", "--lambda", "1e-3", "--out", out]) == 2
    assert main(["fit", "--train", train, "--method", "nystrom", "--m", "51",
                 "--lambda", "1e-3", "--out", out]) == 2
    assert main(["fit", "--train", train, "--lambda", "1e-3", "--kernel", "laplace", "--out", out]) == 2


def test_fit_missing_file_is_io_error(tmp_path):
    assert main(["fit", "--train", str(tmp_path / "nope.csv"), "--lambda", "1e-3",
                 "--out", str(tmp_path / "m.csv")]) == 1


def test_fit_numeric_failure_exit_3(tmp_path, capsys):
    g = make_uniform_grid(9)
    x = np.linspace(0, 1, 9) ** 2
    path = tmp_path / "dup.csv"
    write_dataset_csv(Dataset(np.vstack([x, x, x]), [1.0, 2.0, 3.0], g), path)
    code = main(["fit", "--train", str(path), "--method", "nystrom", "--m", "3", "--lambda", "1e-300",
                 "--jitter", "off", "--out", str(tmp_path / "m.csv")])
    assert code == 3
    assert "condition" in capsys.readouterr().err


def test_predict_zero_model(small_dir, tmp_path):
    train = str(small_dir / "train.csv")
    model = tmp_path / "zero.csv"
    body = "\n".join(f"{i},{i},0" for i in range(50))
    model.write_text(f"kind,lambda,kernel,m\nfull,0.001,sobolev-bernoulli,50\n"
                     f"index,subsample_index,coefficient\n{body}\n")
    out = tmp_path / "p.csv"
    assert main(["predict", "--train", train, "--model", str(model), "--data", train, "--out", str(out)]) == 0
    assert all(float(r[1]) == 0.0 for r in rows(out)[1:])
    assert len(rows(out)) == 51


def test_sweep_single_cell_and_svg(small_dir, tmp_path):
    out, svg = tmp_path / "s.csv", tmp_path / "s.svg"
    assert main(["sweep", "--train", str(small_dir / "train.csv"), "--test", str(small_dir / "test.csv"),
                 "--reps", "1", "--lambda-points", "1", "--m-points", "1", "--m-max", "40",
                 "--out", str(out), "--svg", str(svg)]) == 0
    r = rows(out)
    assert r[0] == ["m", "lambda", "mean_rmse", "std_rmse", "reps"] and len(r) == 2
    ET.parse(svg)
    manifest = json.loads((tmp_path / "s.csv.manifest.json").read_text())
    assert str(svg) in manifest["files"]


def test_sweep_default_grid_shape(small_dir, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--train", str(small_dir / "train.csv"), "--test", str(small_dir / "test.csv"),
                 "--reps", "1", "--m-max", "50", "--out", str(out)]) == 0
    assert len(rows(out)) == 626


def test_sweep_m_max_too_large(small_dir, tmp_path):
    assert main(["sweep", "--train", str(small_dir / "train.csv"), "--test", str(small_dir / "test.csv"),
                 "--reps", "1", "--out", str(tmp_path / "s.csv")]) == 2


def test_rates(capsys):
    assert main(["rates", "--n", "550", "--b", "2", "--s", "0"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "n,b,s,lambda,min_m,pred_rate,est_rate"
    vals = lines[1].split(",")
    assert float(vals[3]) == pytest.approx(550 ** (-2 / 3), rel=1e-15)
    assert main(["rates", "--n", "1", "--b", "2", "--s", "0.25"]) == 0
    vals = capsys.readouterr().out.splitlines()[1].split(",")
    assert float(vals[3]) == 1.0 and vals[4] == "1"


def test_rates_usage(capsys):
    assert main(["rates", "--n", "10", "--b", "0.5", "--s", "0"]) == 2
    assert main(["rates", "--n", "10", "--b", "2", "--s", "0.9"]) == 2
    assert main(["rates", "--b", "2", "--s", "0"]) == 2


def test_bench_rows(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bench", "--sizes", "500,1000", "--m", "100", "--reps", "3", "--out", str(out)]) == 0
    r = rows(out)
    assert len(r) == 5
    assert {(x[0], x[1]) for x in r[1:]} == {("full", "500"), ("full", "1000"),
                                            ("nystrom", "500"), ("nystrom", "1000")}
    assert main(["bench", "--sizes", "1000,500", "--out", str(out)]) == 2


def test_config_file(small_dir, tmp_path):
    cfg = tmp_path / "fit.cfg"
    out = tmp_path / "m.csv"
    cfg.write_text(f"# fit settings\ntrain = {small_dir / 'train.csv'}\nlambda=1e-4\nmethod=nystrom\n"
                   f"m=7\nseed=12\nout={out}\n")
    assert main(["--config", str(cfg), "fit"]) == 0
    assert rows(out)[1][0] == "nystrom" and rows(out)[1][3] == "7"
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour=blue\n")
    assert main(["--config", str(bad), "fit", "--train", "x", "--lambda", "1"]) == 2


def test_replay_reproduces_outputs(small_dir, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--train", str(small_dir / "train.csv"), "--test", str(small_dir / "test.csv"),
                 "--reps", "2", "--lambda-points", "2", "--m-points", "2", "--m-max", "30",
                 "--out", str(out)]) == 0
    first = out.read_bytes()
    out.unlink()
    assert main(["replay", str(tmp_path / "s.csv.manifest.json")]) == 0
    assert out.read_bytes() == first


def test_replay_generate_manifest(small_dir):
    before = (small_dir / "train.csv").read_bytes()
    (small_dir / "train.csv").unlink()
    assert main(["replay", str(small_dir / "manifest.json")]) == 0
    assert (small_dir / "train.csv").read_bytes() == before


def test_study_command(tmp_path):
    out = tmp_path / "study.csv"
    assert main(["study", "--n-train", "30", "--n-test", "10", "--n-modes", "50", "--grid-size", "32",
                 "--lambda-points", "3", "--reps", "2", "--out", str(out)]) == 0
    assert len(rows(out)) == 4
