import csv
import io
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from mdfoil.cli import main
from mdfoil.data import bundled_path
from mdfoil.mtl import MdfModel, load_model
from mdfoil.nn import network_to_dict

FEW = ["clarky", "naca0012", "naca2412", "e387", "s1223", "goe398"]


def _paths(names=FEW):
    return [str(bundled_path(n)) for n in names]


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_fit_one_file(tmp_path, capsys):
    code, out, _ = _run(capsys, "fit", bundled_path("clarky"), "--out", tmp_path)
    assert code == 0
    doc = json.loads((tmp_path / "clarky.json").read_text())
    assert len(doc["segments"]) == 40
    lines = out.strip().splitlines()
    assert lines[0].startswith("clarky\t") and float(lines[0].split("\t")[1]) <= 1e-6
    assert lines[-1].startswith("# max residual")


def test_fit_directory_with_a_malformed_file(tmp_path, capsys):
    src = tmp_path / "in"
    src.mkdir()
    for name in FEW[:3]:
        shutil.copy(bundled_path(name), src)
    (src / "broken.dat").write_text("broken\n1.0 0.0\n0.5 oops\n0.0 0.0\n")
    code, out, err = _run(capsys, "fit", src, "--out", tmp_path / "out")
    assert code == 1
    assert "broken.dat" in err and "line 3" in err
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == sorted(f"{n}.json" for n in FEW[:3])
    assert out.strip().splitlines()[-1].endswith("1 failed")


def test_features_row_width(capsys):
    code, out, _ = _run(capsys, "features", bundled_path("clarky"))
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert len(rows) == 2 and len(rows[0]) == len(rows[1]) == 272
    assert rows[1][0] == "clarky"


def test_features_of_straight_line_are_constant(straight_line_json, capsys):
    code, out, _ = _run(capsys, "features", straight_line_json)
    assert code == 0
    values = np.array(list(csv.reader(io.StringIO(out)))[1][1:], dtype=float)
    assert len(values) == 271
    np.testing.assert_allclose(values, values[0], rtol=1e-12)
    assert values[0] == pytest.approx(1.25)  # |(1, 0.5)|^2


def test_features_from_curve_json_match_coordinates(tmp_path, capsys):
    _run(capsys, "fit", bundled_path("e387"), "--out", tmp_path)
    _, from_json, _ = _run(capsys, "features", tmp_path / "e387.json")
    _, from_dat, _ = _run(capsys, "features", bundled_path("e387"))
    assert from_json == from_dat


def test_params_row_width(capsys):
    code, out, _ = _run(capsys, "params", bundled_path("naca2412"))
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and len(rows[1]) == 8
    assert rows[0][2] == "max_camber" and float(rows[1][2]) == pytest.approx(0.02, abs=1e-3)


def test_gen_synthetic_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert _run(capsys, "gen-synthetic", "--n", 200, "--seed", 1, "--out", path)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 201


@pytest.fixture
def labels(tmp_path, capsys):
    path = tmp_path / "labels.csv"
    _run(capsys, "gen-synthetic", "--n", 60, "--seed", 2, "--airfoils", *_paths(), "--out", path)
    return path


def test_train_then_eval(tmp_path, labels, capsys):
    model = tmp_path / "mdf.json"
    code, _, _ = _run(
        capsys, "train", "mdf", "--labels", labels, "--airfoils", *_paths(), "--out", model,
        "--epochs", 5, "--sizes", "8x2/4x2/8x2",
    )
    assert code == 0
    report = tmp_path / "report.json"
    code, _, _ = _run(capsys, "eval", model, "--labels", labels, "--airfoils", *_paths(), "--out", report)
    assert code == 0
    doc = json.loads(report.read_text())
    assert doc["n"] == 60 and np.isfinite(doc["mse"]) and np.isfinite(doc["mae"])
    assert len(doc["predictions"]) == 60


def test_zero_epoch_model_is_the_initialisation(tmp_path, labels, capsys):
    model = tmp_path / "mdf.json"
    code, _, _ = _run(
        capsys, "train", "mdf", "--labels", labels, "--airfoils", *_paths(), "--out", model,
        "--epochs", 0, "--sizes", "8x2/4x2/8x2", "--seed", 3,
    )
    assert code == 0
    saved = load_model(model)
    fresh = MdfModel.build(271, 2, 2, ((8, 8), (4, 4), (8, 8)), seed=3)
    for name, net in fresh.networks.items():
        assert network_to_dict(saved.model.networks[name]) == network_to_dict(net)
    assert _run(capsys, "eval", model, "--labels", labels, "--airfoils", *_paths())[0] == 0


@pytest.mark.parametrize("kind", ["mlp", "mtl_g"])
def test_train_baselines(tmp_path, labels, capsys, kind):
    model = tmp_path / f"{kind}.json"
    sizes = "8x2" if kind == "mlp" else "4x2/3x2/4x2"
    code, out, _ = _run(
        capsys, "train", kind, "--labels", labels, "--airfoils", *_paths(), "--out", model,
        "--epochs", 2, "--sizes", sizes,
    )
    assert code == 0 and load_model(model).kind == kind
    _, out, _ = _run(capsys, "eval", model, "--labels", labels, "--airfoils", *_paths())
    assert np.isfinite(json.loads(out)["mse"])


def test_train_autoencoder(tmp_path, capsys):
    model = tmp_path / "ae.json"
    code, _, _ = _run(capsys, "train", "ae2", "--airfoils", *_paths(), "--out", model, "--epochs", 2)
    assert code == 0
    _, out, _ = _run(capsys, "eval", model, "--airfoils", *_paths())
    doc = json.loads(out)
    assert doc["kind"] == "ae2" and set(doc["per_airfoil_mse"]) == set(FEW)


def test_experiment_writes_comparison(tmp_path, labels, capsys):
    out_dir = tmp_path / "exp"
    code, out, _ = _run(
        capsys, "experiment", "--labels", labels, "--airfoils", *_paths(), "--out", out_dir,
        "--epochs", 2, "--sizes", "mdf=8x2/4x2/8x2", "mlp=8x2",
    )
    assert code == 0
    comparison = json.loads((out_dir / "comparison.json").read_text())
    assert comparison[0]["reference"] == "mlp" and comparison[0]["candidate"] == "mdf"
    assert "mse" in comparison[0]["eta"]
    assert (out_dir / "mdf_rounds.csv").exists() and (out_dir / "mlp_predictions.csv").exists()


def test_seeded_training_is_reproducible(tmp_path, labels, capsys):
    files = []
    for i in range(2):
        path = tmp_path / f"m{i}.json"
        _run(capsys, "train", "mlp", "--labels", labels, "--airfoils", *_paths(), "--out", path,
             "--epochs", 3, "--sizes", "8x2", "--seed", 7)
        files.append(path.read_bytes())
    assert files[0] == files[1]


def test_config_file_sets_defaults_and_flags_win(tmp_path, labels, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text('[train]\nepochs = 4\nsizes = "8x2"\n')
    model = tmp_path / "m.json"
    args = ["train", "mlp", "--labels", labels, "--airfoils", *_paths(), "--out", model, "--config", cfg]
    assert _run(capsys, *args)[0] == 0
    assert load_model(model).feature_config["train"]["epochs"] == 4
    assert _run(capsys, *args, "--epochs", 1)[0] == 0
    assert load_model(model).feature_config["train"]["epochs"] == 1
    cfg.write_text("bogus = 1\n")
    assert _run(capsys, *args)[0] == 2


def test_invalid_invocations_exit_2(capsys):
    assert _run(capsys, "no-such-command")[0] == 2
    assert _run(capsys, "train", "cnn", "--out", "x")[0] == 2
    assert _run(capsys, "train", "mdf", "--out", "x", "--sizes", "8x2")[0] == 2


def test_help_lists_training_defaults():
    out = subprocess.run(
        [sys.executable, "-m", "mdfoil.cli", "train", "--help"], capture_output=True, text=True, check=True
    ).stdout
    rows = {" ".join(line.split()[:-1]): line.split()[-1] for line in out.splitlines() if line.startswith("  ")}
    assert "Adam(Beta1=0.9,Beta2=0.999)" in out and "max-min normalization" in out
    assert "10-fold cross validation" in out and "8: 1: 1" in out
    assert rows["batch size"] == "128"
    assert rows["learning rate"] == "0.001"
    assert rows["epoch"] == "2000"
    assert rows["active function"] == "Relu" and rows["batch normalization"] == "Yes"
