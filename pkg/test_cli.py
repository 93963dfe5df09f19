#!/usr/bin/env python3
"""
Command Line Test Script

Runs every sub-command through main() against temporary files and checks
outputs and exit codes.
"""

import os
import sys

import numpy as np
import pytest
import yaml

# Add path for imports
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import msvm_cli
from config.config_manager import reset_config_manager
from services.data_pipeline import gen_five_class
from services.dataset_io import load_model, write_csv
from solvers.admm_solver import DivergenceError
from solvers.core_model import Dataset
from solvers.linear_solver import FactorizationError

CONFIG_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config", "system_config.yaml")

@pytest.fixture
def cli(tmp_path):
    """main() bound to a config whose log directory lives under tmp_path."""
    with open(CONFIG_PATH) as f:
        data = yaml.safe_load(f)
    data['logging']['directory'] = str(tmp_path / "logs")
    data['logging']['level'] = "WARNING"
    config_file = tmp_path / "config.yaml"
    config_file.write_text(yaml.safe_dump(data))

    def run(*argv):
        return msvm_cli.main(["--config", str(config_file)] + [str(a) for a in argv])

    yield run
    reset_config_manager()

def test_gen_is_deterministic(cli, tmp_path, capsys):
    assert cli("gen", "--variant", "five-class", "--n", 50, "--seed", 7, "--out", tmp_path / "a") == 0
    assert cli("gen", "--variant", "five-class", "--n", 50, "--seed", 7, "--out", tmp_path / "b") == 0
    for name in ("train.csv", "test.csv", "mask.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert "n=50" in capsys.readouterr().out

def test_gen_four_class(cli, tmp_path):
    assert cli("gen", "--variant", "four-class", "--n", 20, "--p", 60, "--s", 10,
               "--rho", 0.8, "--out", tmp_path) == 0
    header = (tmp_path / "train.csv").read_text().splitlines()[0].split(",")
    assert len(header) == 61 and header[-1] == "label"
    assert len((tmp_path / "mask.csv").read_text().splitlines()) == 60

def test_gen_rejects_bad_block(cli, tmp_path):
    assert cli("gen", "--variant", "four-class", "--n", 20, "--p", 10, "--s", 10,
               "--out", tmp_path) == 2

def test_train_and_predict(cli, tmp_path, capsys):
    cli("gen", "--n", 200, "--seed", 1, "--out", tmp_path)
    model = tmp_path / "model.txt"
    trace = tmp_path / "trace.tsv"
    rc = cli("train", tmp_path / "train.csv", "--reg", "elastic", "--lambda1", 0.05,
             "--lambda2", 1, "--trace", trace, "--out", model)
    assert rc == 0
    out = capsys.readouterr().out
    assert "converged: True" in out

    iterations = int(out.split("iterations: ")[1].split()[0])
    rows = trace.read_text().splitlines()
    assert rows[0] == "k\tobjective\tr_A\tr_U\tr_V"
    assert len(rows) == iterations + 1 <= 5001

    clf = load_model(model)
    assert (clf.p, clf.J) == (10, 5)

    assert cli("predict", "--model", model, "--data", tmp_path / "test.csv",
               "--out", tmp_path / "pred.txt") == 0
    out = capsys.readouterr().out
    accuracy = float(out.split("accuracy: ")[1].split()[0])
    assert 0.3 <= accuracy <= 1.0
    predicted = [int(v) for v in (tmp_path / "pred.txt").read_text().split()]
    assert len(predicted) == 200 and set(predicted) <= {1, 2, 3, 4, 5}

def test_train_exit_codes(cli, tmp_path, capsys):
    missing = tmp_path / "missing.csv"
    assert cli("train", missing) == 2
    assert str(missing) in capsys.readouterr().err

    cli("gen", "--n", 40, "--seed", 2, "--out", tmp_path)
    assert cli("train", tmp_path / "train.csv", "--reg", "group", "--lambda1", 0.01,
               "--lambda2", 0.1, "--maxit", 2, "--out", tmp_path / "m.txt") == 1
    assert (tmp_path / "m.txt").exists()

    assert cli("train", tmp_path / "train.csv", "--lambda1", -1) == 2

def test_train_huge_lambda1_gives_zero_weights(cli, tmp_path):
    cli("gen", "--n", 40, "--seed", 3, "--out", tmp_path)
    model = tmp_path / "zero.txt"
    cli("train", tmp_path / "train.csv", "--lambda1", 1e6, "--truncate", "--out", model)
    np.testing.assert_array_equal(load_model(model).W, 0.0)

def test_predict_separable_toy(cli, tmp_path, capsys):
    rng = np.random.default_rng(0)
    labels = np.arange(30) % 3 + 1
    centers = np.array([[10.0, 0.0, -10.0], [0.0, 10.0, -10.0]])
    X = centers[:, labels - 1] + 0.1 * rng.standard_normal((2, 30))
    write_csv(tmp_path / "toy.csv", Dataset(X, labels, 3))

    cli("train", tmp_path / "toy.csv", "--reg", "group", "--lambda1", 0.001,
        "--lambda2", 0.001, "--out", tmp_path / "toy.txt")
    capsys.readouterr()
    assert cli("predict", "--model", tmp_path / "toy.txt", "--data", tmp_path / "toy.csv") == 0
    assert "accuracy: 1.000000" in capsys.readouterr().out

def test_predict_unlabeled_and_mismatch(cli, tmp_path, capsys):
    cli("gen", "--n", 40, "--seed", 4, "--out", tmp_path)
    cli("train", tmp_path / "train.csv", "--out", tmp_path / "m.txt")
    capsys.readouterr()

    lines = (tmp_path / "test.csv").read_text().splitlines()
    unlabeled = [",".join(line.split(",")[:-1]) for line in lines]
    (tmp_path / "unlabeled.csv").write_text("\n".join(unlabeled) + "\n")
    assert cli("predict", "--model", tmp_path / "m.txt", "--data", tmp_path / "unlabeled.csv") == 0
    out = capsys.readouterr().out
    assert "accuracy" not in out
    assert len(out.split()) == 40

    narrow = [",".join(line.split(",")[:5]) for line in lines]
    (tmp_path / "narrow.csv").write_text("\n".join(narrow) + "\n")
    assert cli("predict", "--model", tmp_path / "m.txt", "--data", tmp_path / "narrow.csv",
               "--label-column", "none") == 2

def test_cv_echoes_grid_choices(cli, tmp_path, capsys):
    cli("gen", "--n", 30, "--seed", 5, "--out", tmp_path)
    capsys.readouterr()
    assert cli("cv", tmp_path / "train.csv", "--reg", "group", "--grid1", "0.02",
               "--grid2", "0.05", "--tol", 1e-4) == 0
    out = capsys.readouterr().out
    assert "selected: lambda1=0.02 lambda2=0.05" in out
    assert out.splitlines()[0] == "lambda1\tlambda2\tfold1\tfold2\tfold3\tmean"

    assert cli("cv", tmp_path / "train.csv", "--grid1", "0.01,0.05", "--seed", 3, "--tol", 1e-4) == 0
    first = capsys.readouterr().out
    assert first.splitlines()[-1].endswith("lambda2=1")
    assert cli("cv", tmp_path / "train.csv", "--grid1", "0.01,0.05", "--seed", 3, "--tol", 1e-4) == 0
    assert capsys.readouterr().out == first

def test_bench_writes_report(cli, tmp_path, capsys):
    out = tmp_path / "bench.tsv"
    rc = cli("bench", "--experiment", "example1", "--trials", 2, "--n", 30, "--n-test", 50,
             "--reg", "group", "--reg", "sup", "--omit-time", "--out", out)
    assert rc in (0, 1)
    lines = out.read_text().splitlines()
    assert lines[0].split("\t") == ['trial', 'model', 'accuracy', 'se', 'time', 'CZ', 'IZ', 'NR']
    assert len(lines) == 1 + 4 + 4
    assert "group\t" in capsys.readouterr().out
    assert list((tmp_path / "logs" / "detailed_runs").glob("*.json"))

def test_bench_real_data(cli, tmp_path, capsys):
    train, _ = gen_five_class(40, seed=21)
    test, _ = gen_five_class(20, seed=22)
    write_csv(tmp_path / "train.csv", train)
    write_csv(tmp_path / "test.csv", test)
    out = tmp_path / "real.tsv"
    rc = cli("bench", "--experiment", "real", "--train", tmp_path / "train.csv",
             "--test", tmp_path / "test.csv", "--top-k", 4, "--trials", 2, "--reg", "group",
             "--no-tune", "--lambda1", 0.01, "--lambda2", 0.05, "--omit-time", "--out", out)
    assert rc in (0, 1)
    lines = out.read_text().splitlines()
    assert lines[0].split("\t") == ['trial', 'model', 'accuracy', 'se', 'time', 'NZ', 'NR']
    assert len(lines) == 1 + 2 + 2
    assert all(float(line.split("\t")[-1]) <= 4 for line in lines[1:3])
    capsys.readouterr()

    assert cli("bench", "--experiment", "real", "--test", tmp_path / "test.csv",
               "--trials", 1, "--out", out) == 2
    assert "training and a test file" in capsys.readouterr().err

def test_non_finite_input_is_a_usage_error(cli, tmp_path, capsys):
    path = tmp_path / "nan.csv"
    path.write_text("x1,x2,label\n1,2,1\n3,nan,2\n")
    assert cli("train", path) == 2
    assert "row 3, column 2" in capsys.readouterr().err

def test_config_command(cli, capsys):
    assert cli("config") == 0
    out = capsys.readouterr().out
    assert "Regularized MSVM Configuration Summary" in out
    assert "Real: 100 trials" in out

def test_invalid_config_exits_with_usage_error(tmp_path, capsys):
    with open(CONFIG_PATH) as f:
        data = yaml.safe_load(f)
    data['solver']['lambda3'] = 0.0
    data['logging']['directory'] = str(tmp_path / "logs")
    config_file = tmp_path / "bad.yaml"
    config_file.write_text(yaml.safe_dump(data))
    try:
        assert msvm_cli.main(["--config", str(config_file), "config"]) == 2
    finally:
        reset_config_manager()
    assert "config error: solver.lambda3 must be positive" in capsys.readouterr().err


@pytest.mark.parametrize("error", [FactorizationError("not positive definite"),
                                   DivergenceError(100, "W")])
def test_solver_failures_exit_with_one(cli, tmp_path, monkeypatch, capsys, error):
    cli("gen", "--n", 20, "--seed", 6, "--out", tmp_path)

    def failing_fit(*args, **kwargs):
        raise error

    monkeypatch.setattr("msvm_cli.fit", failing_fit)
    assert cli("train", tmp_path / "train.csv") == 1
    assert str(error) in capsys.readouterr().err


def test_usage_errors(cli):
    assert cli("frobnicate") == 2
    assert cli("train") == 2
    assert cli("cv", "data.csv", "--grid1", "a,b") == 2

if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
