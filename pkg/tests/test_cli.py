import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from simdebias.cli import EXIT_FAILURES, EXIT_INPUT, EXIT_OK, blob_sha1, main
from simdebias.simulation import ExperimentConfig, simulate_dataset

TINY = """\
[DEFAULT]
replicates = 5
seed = 11

[tiny]
n = 50
p = 100
s = 3
kappa = 0,0.5
"""

TINY_HERMITE = """\
[sine]
n = 60
p = 120
kappa = 0.5
link = sine
tau = sine
degrees = 1-10
replicates = 2
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY)
    return path


def write_data(path, X, y):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"] + [f"x{j + 1}" for j in range(X.shape[1])])
        for yi, row in zip(y, X):
            w.writerow([repr(float(yi))] + [repr(float(v)) for v in row])
    return path


@pytest.fixture
def data_file(tmp_path):
    cfg = ExperimentConfig(n=150, p=60, s=3, master_seed=4)
    data = simulate_dataset(cfg, 0)
    return write_data(tmp_path / "data.csv", data.X, data.y), cfg


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_blob_hash_matches_git():
    assert blob_sha1(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"
    assert blob_sha1(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_missing_config(tmp_path, capsys):
    assert main(["coverage", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert "nope.ini" in capsys.readouterr().err


def test_bad_config_key(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[a]\nn = 50\nbogus = 1\n")
    assert main(["coverage", str(path), "--out", str(tmp_path / "o")]) == EXIT_INPUT


def test_coverage_smoke_and_determinism(tiny_config, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["coverage", str(tiny_config), "--out", str(out1), "--threads", "1"]) == EXIT_OK
    assert main(["coverage", str(tiny_config), "--out", str(out2), "--threads", "2"]) == EXIT_OK
    body = (out1 / "coverage.csv").read_bytes()
    assert body == (out2 / "coverage.csv").read_bytes()
    rows = read_rows(out1 / "coverage.csv")
    assert [r["cell"] for r in rows] == ["tiny[kappa=0]", "tiny[kappa=0.5]"]
    assert all(r["replicates"] == "5" for r in rows)
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert manifest["master_seed"] == 11
    assert manifest["inputs"][str(tiny_config)] == blob_sha1(tiny_config.read_bytes())
    assert set(manifest["outputs"]) == {"csv", "json"}
    assert manifest["status"] == "ok" and manifest["finished"]
    json.loads((out1 / "coverage.json").read_text())


def test_seed_precedence(tiny_config, tmp_path, monkeypatch):
    monkeypatch.setenv("SIMDEBIAS_SEED", "5")
    assert main(["coverage", str(tiny_config), "--out", str(tmp_path / "env"), "--threads", "1"]) == EXIT_OK
    assert json.loads((tmp_path / "env" / "manifest.json").read_text())["master_seed"] == 5
    assert main(["coverage", str(tiny_config), "--out", str(tmp_path / "flag"), "--threads", "1", "--seed", "8"]) == EXIT_OK
    assert json.loads((tmp_path / "flag" / "manifest.json").read_text())["master_seed"] == 8
    monkeypatch.setenv("SIMDEBIAS_SEED", "abc")
    assert main(["coverage", str(tiny_config), "--out", str(tmp_path / "x")]) == EXIT_INPUT


def test_replay_reproduces(tiny_config, tmp_path):
    out = tmp_path / "run"
    assert main(["coverage", str(tiny_config), "--out", str(out), "--threads", "1", "--seed", "3"]) == EXIT_OK
    again = tmp_path / "replay"
    assert main(["replay", str(out / "manifest.json"), "--out", str(again), "--threads", "1"]) == EXIT_OK
    assert (out / "coverage.csv").read_bytes() == (again / "coverage.csv").read_bytes()


def test_hermite_command(tmp_path):
    path = tmp_path / "h.ini"
    path.write_text(TINY_HERMITE)
    out = tmp_path / "h"
    assert main(["hermite", str(path), "--out", str(out), "--threads", "1"]) == EXIT_OK
    rows = read_rows(out / "hermite.csv")
    assert [int(r["degree"]) for r in rows] == list(range(1, 11))
    tsv = (out / "mse_sine.tsv").read_text().splitlines()
    assert tsv[0] == "degree\tmse\tmc_se" and len(tsv) == 11


def test_hermite_needs_degrees(tiny_config, tmp_path):
    assert main(["hermite", str(tiny_config), "--out", str(tmp_path / "o")]) == EXIT_INPUT


def test_replicate_failures_exit_code(tiny_config, tmp_path, monkeypatch):
    import simdebias.simulation as sim

    def failing(config, r, index=None):
        return sim.ReplicateRecord(r, error="DegenerateDenominatorError: forced")

    monkeypatch.setattr(sim, "coverage_replicate", failing)
    code = main(["coverage", str(tiny_config), "--out", str(tmp_path / "o"), "--threads", "1"])
    assert code == EXIT_FAILURES
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["status"] == "replicate-failure"
    assert manifest["failures"]["tiny[kappa=0]"] == 5


def test_infer_covers_truth(data_file, tmp_path):
    path, cfg = data_file
    sigma = tmp_path / "sigma.csv"
    np.savetxt(sigma, cfg.cov.dense(), delimiter=",")
    out = tmp_path / "est.csv"
    assert main(["infer", str(path), "--target", "1,2", "--sigma", str(sigma), "--seed", "1", "--out", str(out)]) == EXIT_OK
    rows = read_rows(out)
    assert [r["target"] for r in rows] == ["1", "2"]
    assert rows[0]["method"] == "KnownSigma" and rows[0]["n"] == "300" and rows[0]["p"] == "60"
    beta = cfg.slope() * cfg.index_vector().tau
    for r, b in zip(rows, beta):
        assert float(r["ci_lo"]) <= b <= float(r["ci_hi"])
    manifest = json.loads((tmp_path / "est.csv.manifest.json").read_text())
    assert manifest["inputs"][str(path)] == blob_sha1(path.read_bytes())
    first = out.read_bytes()
    assert main(["infer", str(path), "--target", "1,2", "--sigma", str(sigma), "--seed", "1", "--out", str(out)]) == EXIT_OK
    assert out.read_bytes() == first


def test_infer_methods(data_file, tmp_path):
    path, _ = data_file
    out = tmp_path / "e.csv"
    assert main(["infer", str(path), "--target", "1", "--hermite", "3", "--seed", "2", "--out", str(out)]) == EXIT_OK
    assert read_rows(out)[0]["method"] == "HermiteEstimated(3)"
    assert main(["infer", str(path), "--target", "1", "--crossfit", "--seed", "2", "--out", str(out)]) == EXIT_OK
    assert read_rows(out)[0]["method"] == "CrossfitAverage"


def test_infer_crossfit_odd_rows(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((101, 6))
    y = np.sign(X[:, 0]) + 0.1 * rng.standard_normal(101)
    path = write_data(tmp_path / "odd.csv", X, y)
    out = tmp_path / "o.csv"
    args = ["infer", str(path), "--target", "1", "--crossfit", "--seed", "0", "--out", str(out)]
    assert main(args) == EXIT_OK
    first = out.read_bytes()
    assert main(args) == EXIT_OK
    assert out.read_bytes() == first


@pytest.mark.parametrize("target", ["0", "61", "x"])
def test_infer_target_bounds(data_file, tmp_path, target):
    path, _ = data_file
    assert main(["infer", str(path), "--target", target, "--out", str(tmp_path / "o.csv")]) == EXIT_INPUT


def test_infer_ragged_row(tmp_path, capsys):
    path = tmp_path / "r.csv"
    path.write_text("y,x1,x2\n1,2,3\n1,2\n1,2,3\n1,2,3\n1,2,3\n")
    assert main(["infer", str(path), "--target", "1", "--out", str(tmp_path / "o.csv")]) == EXIT_INPUT
    assert "row 3" in capsys.readouterr().err


def test_infer_non_finite_cell(tmp_path, capsys):
    path = tmp_path / "r.csv"
    path.write_text("y,x1,x2\n1,2,3\n1,nan,3\n1,2,3\n1,2,3\n1,2,3\n")
    assert main(["infer", str(path), "--target", "1", "--out", str(tmp_path / "o.csv")]) == EXIT_INPUT
    err = capsys.readouterr().err
    assert "row 3" in err and "x1" in err


def test_infer_needs_two_predictors(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("y,x1\n1,2\n1,2\n1,2\n1,2\n")
    assert main(["infer", str(path), "--target", "1", "--out", str(tmp_path / "o.csv")]) == EXIT_INPUT


def test_tune_modes(data_file, capsys):
    path, _ = data_file
    assert main(["tune", str(path), "--degrees", "4"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "4"
    assert main(["tune", str(path), "--nodewise", "1"]) == EXIT_OK
    first = capsys.readouterr().out.strip()
    lam = float(first)
    assert np.isfinite(lam) and lam > 0
    assert main(["tune", str(path), "--nodewise", "1"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == first
    assert main(["tune", str(path), "--degrees", "1-3", "--block", "10", "--seed", "0"]) == EXIT_OK
    assert capsys.readouterr().out.strip() in {"1", "2", "3"}
    assert main(["tune", str(path)]) == EXIT_INPUT


def test_bad_arguments():
    assert main(["infer"]) == EXIT_INPUT
    assert main(["nonsense"]) == EXIT_INPUT


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "simdebias", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip().startswith("simdebias")
