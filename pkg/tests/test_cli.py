import json
import subprocess
import sys

import numpy as np
import pytest

from ncmsg import cli
from ncmsg import datagen as dg
from ncmsg.model import BatchDataset


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def labeled(tmp_path, capsys):
    path = tmp_path / "labeled"
    code, _, _ = run(["simulate", "--p", 3, "--n", 20, "--classes", 2, "--batches", 4,
                      "--seed", 1, "--out", path], capsys)
    assert code == 0
    return path


def table(text):
    lines = text.splitlines()
    assert lines[0].startswith("# config: ")
    config = json.loads(lines[0][len("# config: "):])
    return config, [line.split(",") for line in lines[1:]]


# --- exit codes -------------------------------------------------------------------

def test_usage_errors_exit_with_one(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["fit"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        cli.main(["nonsense"])
    assert info.value.code == 1


def test_missing_inputs_exit_with_one(tmp_path, capsys):
    code, _, err = run(["fit", "--data", tmp_path / "nothing", "--out", tmp_path / "o.json"],
                       capsys)
    assert code == 1 and "not found" in err
    code, _, err = run(["kl", "--a", tmp_path / "a.json", "--b", tmp_path / "b.json"], capsys)
    assert code == 1 and "no such file" in err


def test_bad_spec_exits_with_one(labeled, tmp_path, capsys):
    code, _, err = run(["classify", "train", "--data", labeled, "--spec", "ncmsg-theta",
                        "--out", tmp_path / "m.json"], capsys)
    assert code == 1 and "--spec" in err
    code, _, _ = run(["classify", "train", "--data", labeled, "--spec", "raw-batch,gauss-sym-kl",
                      "--out", tmp_path / "m.json"], capsys)
    assert code == 1


def test_degenerate_data_exits_with_two_and_names_the_stage(tmp_path, capsys):
    rng = np.random.default_rng(0)
    dg.save_dataset(tmp_path / "small", [BatchDataset(rng.standard_normal((3, 4)))])
    with pytest.warns(RuntimeWarning):
        code, _, err = run(["fit", "--data", tmp_path / "small", "--beta", 0.1,
                            "--out", tmp_path / "fit.json"], capsys)
    assert code == 2
    assert "fit batch 0" in err


def test_thread_variable_is_validated(labeled, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("NCMSG_THREADS", "zero")
    code, _, err = run(["classify", "train", "--data", labeled, "--spec", "gauss-mean,euclidean",
                        "--out", tmp_path / "m.json"], capsys)
    assert code == 1 and "NCMSG_THREADS" in err


def test_console_script_runs():
    result = subprocess.run([sys.executable, "-m", "ncmsg.cli", "--help"],
                            capture_output=True, text=True, check=False)
    assert result.returncode == 0
    assert "simulate" in result.stdout


# --- workflows --------------------------------------------------------------------

def test_simulate_fit_kl_barycenter(tmp_path, capsys):
    data = tmp_path / "data"
    code, out, _ = run(["simulate", "--p", 3, "--n", 30, "--batches", 3, "--seed", 4,
                        "--out", data], capsys)
    assert code == 0 and "3 batches" in out
    assert len(dg.load_dataset(data)) == 3
    truth = json.loads((data / "parameters.json").read_text())
    assert len(truth) == 1

    fit = tmp_path / "fit.json"
    code, out, _ = run(["fit", "--data", data, "--beta", 0.01, "--out", fit], capsys)
    assert code == 0 and "fitted 3 batches" in out
    points = json.loads(fit.read_text())["points"]
    assert [p["batch"] for p in points] == [0, 1, 2]
    config, rows = table(fit.with_suffix(".report.csv").read_text())
    assert config["beta"] == 0.01
    assert rows[0] == ["batch", "iteration", "cost", "grad_norm", "step"]

    one = tmp_path / "one.json"
    one.write_text(json.dumps(points[0]))
    two = tmp_path / "two.json"
    two.write_text(json.dumps(points[1]["theta"]))
    code, out, _ = run(["kl", "--a", one, "--b", one], capsys)
    assert code == 0 and float(out) == 0.0
    code, ab, _ = run(["kl", "--a", one, "--b", two, "--symmetric"], capsys)
    code, ba, _ = run(["kl", "--a", two, "--b", one, "--symmetric"], capsys)
    assert float(ab) > 0 and float(ab) == pytest.approx(float(ba), rel=1e-12)

    center = tmp_path / "center.json"
    code, out, _ = run(["barycenter", "--inputs", fit, "--out", center], capsys)
    assert code == 0 and "3 points" in out
    assert dg.load_point(center).n == 30


def test_classify_train_predict_eval_tune(labeled, tmp_path, capsys):
    model = tmp_path / "model.json"
    code, out, _ = run(["classify", "train", "--data", labeled,
                        "--spec", "ncmsg-theta,ncmsg-sym-kl,0.1", "--out", model], capsys)
    assert code == 0 and "2 classes" in out

    code, out, _ = run(["classify", "predict", "--model", model, "--data", labeled], capsys)
    assert code == 0
    config, rows = table(out)
    assert rows[0] == ["batch", "predicted"] and len(rows) == 9

    code, out, _ = run(["classify", "eval", "--model", model, "--data", labeled], capsys)
    assert code == 0 and 0.0 <= float(out) <= 1.0

    code, out, err = run(["classify", "tune", "--data", labeled, "--betas", "0.01,1",
                          "--val-fraction", 0.25], capsys)
    assert code == 0 and "best beta" in err
    _, rows = table(out)
    assert [r[0] for r in rows[1:]] == ["0.01", "1.0"]


def test_eval_needs_labels(tmp_path, capsys):
    data = tmp_path / "unlabeled"
    run(["simulate", "--p", 2, "--n", 10, "--batches", 2, "--out", data], capsys)
    labeled = tmp_path / "labeled"
    run(["simulate", "--p", 2, "--n", 10, "--classes", 2, "--batches", 2, "--out", labeled],
        capsys)
    model = tmp_path / "m.json"
    run(["classify", "train", "--data", labeled, "--spec", "gauss-mean,euclidean",
         "--out", model], capsys)
    code, _, err = run(["classify", "eval", "--model", model, "--data", data], capsys)
    assert code == 1 and "labeled" in err


def test_outputs_are_byte_identical_across_runs(labeled, tmp_path, capsys):
    model = tmp_path / "model.json"
    argv = ["classify", "train", "--data", labeled, "--spec", "gauss-mle-pair,gauss-sym-kl",
            "--out", model]
    run(argv, capsys)
    first = model.read_bytes()
    run(argv, capsys)
    assert model.read_bytes() == first

    outs = []
    for _ in range(2):
        run(["bench", "convergence", "--p", 3, "--n", 20, "--beta", "0.01", "--max-iter", 30,
             "--out", tmp_path / "trace.csv"], capsys)
        outs.append((tmp_path / "trace.csv").read_bytes())
    assert outs[0] == outs[1]


# --- benchmarks -------------------------------------------------------------------

def test_bench_convergence_table_and_plot(tmp_path, capsys):
    png = tmp_path / "conv.png"
    code, out, _ = run(["bench", "convergence", "--p", 3, "--n", 20, "--beta", "0.01,0.1",
                        "--optimizer", "product", "--max-iter", 20, "--plot", png], capsys)
    assert code == 0
    config, rows = table(out)
    assert config["optimizer"] == "product" and config["beta"] == [0.01, 0.1]
    assert rows[0] == ["problem", "optimizer", "seed", "iteration", "cost", "grad_norm", "step",
                       "status"]
    assert {r[0] for r in rows[1:]} == {"beta=0.01", "beta=0.1"}
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_bench_convergence_barycenter(capsys):
    code, out, _ = run(["bench", "convergence", "--problem", "barycenter", "--m", "2,3",
                        "--p", 2, "--n", 5, "--max-iter", 50], capsys)
    assert code == 0
    _, rows = table(out)
    assert {r[0] for r in rows[1:]} == {"M=2", "M=3"}


def test_bench_mse_table_and_plot(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("NCMSG_THREADS", "1")
    png = tmp_path / "mse.png"
    code, out, _ = run(["bench", "mse", "--p", 3, "--n-grid", "20,50", "--trials", 3,
                        "--nu", 1.0, "--plot", png], capsys)
    assert code == 0
    _, rows = table(out)
    assert rows[0] == ["method", "n", "mse_mu", "mse_sigma", "failures"]
    assert len(rows) == 1 + 2 * 4
    assert png.exists()


def test_bench_robustness_table_and_plot(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("NCMSG_THREADS", "1")
    png = tmp_path / "rob.png"
    code, out, _ = run(["bench", "robustness", "--p", 3, "--n", 15, "--classes", 2,
                        "--batches", 3, "--t-grid", "0,1", "--mode", "mean", "--plot", png],
                       capsys)
    assert code == 0
    _, rows = table(out)
    assert rows[0] == ["classifier", "mode", "t", "f1_weighted"]
    assert len(rows) == 1 + 6 * 2
    assert all(r[1] == "mean" for r in rows[1:])
    assert png.exists()
