import json
import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.io import mmwrite

from probelogdet import GridSpec, Hyperparams, build_precision, logdet_exact_dense, sample_gmrf_dense
from probelogdet.cli import run


def call(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), err


def test_logdet_exact_grid(capsys):
    code, out, _ = call(capsys, "logdet", "--grid", "2x2", "--kappa", "1", "--tau", "1", "--method", "exact")
    L = np.array([[2, -1, -1, 0], [-1, 2, 0, -1], [-1, 0, 2, -1], [0, -1, -1, 2]], float)
    assert code == 0
    assert out["value"] == pytest.approx(2 * np.linalg.slogdet(np.eye(4) + L)[1], rel=1e-14)
    assert out["seed"] == 0 and "wall_time_s" in out


def test_logdet_identity_matrix_file(tmp_path, capsys):
    path = tmp_path / "id4.mtx"
    mmwrite(str(path), sp.identity(4, format="coo"), symmetry="symmetric")
    code, out, _ = call(capsys, "logdet", "--matrix", str(path), "--method", "exact")
    assert code == 0 and out["value"] == 0.0


def test_color_checkerboard(tmp_path, capsys):
    cmap = tmp_path / "colors.txt"
    code, out, _ = call(capsys, "color", "--grid", "8x8", "--kappa", "1", "--tau", "1", "--k", "1", "-o", str(cmap))
    assert code == 0 and out["num_colors"] == 2
    assert np.loadtxt(cmap, dtype=int).tolist() == (np.add.outer(np.arange(8), np.arange(8)).ravel() % 2).tolist()
    code, out, _ = call(capsys, "color", "--grid", "8x8", "--k", "1", "--graph", "precision")
    assert out["num_colors"] > 2


def test_build_then_logdet(tmp_path, capsys):
    path = tmp_path / "q.mtx"
    code, out, _ = call(capsys, "build", "--grid", "6x5", "--kappa", "0.5", "--tau", "2", "-o", str(path))
    assert code == 0 and out["n"] == 30
    ref = logdet_exact_dense(build_precision(GridSpec((6, 5)), Hyperparams(0.5, 2.0)))
    _, out, _ = call(capsys, "logdet", "--matrix", str(path), "--method", "exact")
    assert out["value"] == pytest.approx(ref, rel=1e-14)
    _, out, _ = call(capsys, "logdet", "--matrix", str(path), "--k", "6", "--tol", "1e-5")
    assert out["value"] == pytest.approx(ref, rel=1e-3)
    assert out["num_vectors"] > 0 and out["seed_iterations_total"] > 0


def test_quadrature_table(capsys):
    code, out, _ = call(capsys, "quadrature-table", "--lmin", "1", "--lmax", "4", "--N", "20")
    assert code == 0 and len(out["alpha"]) == len(out["sigma"]) == 20
    alpha = np.array([complex(*a) for a in out["alpha"]])
    sigma = np.array([complex(*s) for s in out["sigma"]])
    assert (alpha / (2.0 - sigma)).sum().real == pytest.approx(np.log(2.0), abs=1e-10)


def test_hutchinson_output(capsys):
    code, out, _ = call(capsys, "logdet", "--grid", "8x8", "--kappa", "0.5", "--method", "hutchinson", "--s", "30")
    assert code == 0
    assert set(out["confidence"]) >= {"half_width", "hoeffding_half_width", "std_error"}


def test_reproducible_and_thread_independent(capsys):
    args = ["logdet", "--grid", "12x12", "--kappa", "0.3", "--k", "4", "--seed", "7"]
    runs = [call(capsys, *args, "--threads", str(t))[1] for t in (1, 1, 4)]
    for r in runs:
        r.pop("wall_time_s")
        r.pop("threads")
    assert runs[0] == runs[1] == runs[2]


def test_threads_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("PROBELOGDET_THREADS", "3")
    _, out, _ = call(capsys, "logdet", "--grid", "4x4", "--k", "2")
    assert out["threads"] == 3
    _, out, _ = call(capsys, "logdet", "--grid", "4x4", "--k", "2", "--threads", "2")
    assert out["threads"] == 2


def test_fit(tmp_path, capsys):
    g = GridSpec((10, 10))
    X = sample_gmrf_dense(build_precision(g, Hyperparams(0.5, 1.0)), size=2, random_state=0)
    data = tmp_path / "x.txt"
    np.savetxt(data, X)
    code, out, _ = call(capsys, "fit", "--grid", "10x10", "--data", str(data), "--schedule", "2:10,4:10", "-o", str(tmp_path / "t.json"))
    assert code == 0 and out["realizations"] == 2
    assert len(out["phases"]) == 2 and out["termination"] == "converged"
    assert json.loads((tmp_path / "t.json").read_text())["kappa"] == out["kappa"]


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["logdet", "--grid", "3x"],
        ["logdet", "--method", "exact"],
        ["logdet", "--grid", "4x4", "--matrix", "a.mtx"],
        ["logdet", "--grid", "4x4", "--kappa", "-1"],
        ["logdet", "--grid", "4x4", "--k", "0"],
        ["logdet", "--grid", "4x4", "--threads", "0"],
        ["quadrature-table", "--lmin", "2", "--lmax", "1", "--N", "4"],
        ["fit", "--grid", "4x4", "--data", "x", "--schedule", "4:1,2:1"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    code, _, err = call(capsys, *argv)
    assert code == 2 and "usage" in err


def test_numerical_failure_exit_1(tmp_path, capsys):
    path = tmp_path / "indef.mtx"
    mmwrite(str(path), sp.coo_matrix(np.array([[1.0, 2.0], [2.0, 1.0]])), symmetry="symmetric")
    code, out, _ = call(capsys, "logdet", "--matrix", str(path), "--method", "exact")
    assert code == 1 and out["error"] == "NotPositiveDefiniteError"
    code, out, _ = call(capsys, "logdet", "--grid", "4x4", "--lmin", "1e-200", "--lmax", "1e200")
    assert code == 1 and "lambda_min" in out["message"]


def test_console_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "probelogdet.cli", "quadrature-table", "--lmin", "1", "--lmax", "2", "--N", "3"],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0 and json.loads(res.stdout)["N"] == 3
