import csv

import numpy as np
import pytest
import scipy.sparse as sp

from subspace_opt.cli import (EXIT_BREAKDOWN, EXIT_CONFIG, EXIT_OK, EXIT_VERIFY, main, parallel_map, parse_seeds,
                              read_config)
from subspace_opt.errors import InvalidConfig
from subspace_opt.mmio import read_vector, write_matrix, write_vector


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parse_seeds():
    assert parse_seeds("0..3") == [0, 1, 2, 3]
    assert parse_seeds("5,2,2,0..1") == [0, 1, 2, 5]
    for bad in ("", "a", "-1", "3..x"):
        with pytest.raises(InvalidConfig):
            parse_seeds(bad)


def test_parallel_map_keeps_order(monkeypatch):
    monkeypatch.setenv("SUBSPACE_OPT_THREADS", "3")
    assert parallel_map(lambda k: k * k, range(10)) == [k * k for k in range(10)]


def test_opt_writes_one_trace_per_seed(tmp_path):
    out = tmp_path / "o"
    rc = main(["opt", "--engine", "tr", "--ensemble", "gaussian", "--l", "4", "--problem", "rosenbrock",
               "--d", "16", "--seeds", "0..2", "--budget", "50", "--out", str(out)])
    assert rc == EXIT_OK
    traces = sorted(p.name for p in out.glob("trace_*.csv"))
    assert traces == [f"trace_rosenbrock_tr_seed{k}.csv" for k in range(3)]
    tr = rows(out / traces[0])
    assert list(tr[0]) == ["k", "is_true", "successful", "alpha", "f", "grad_norm", "model_decrease"]
    assert len(rows(out / "summary.csv")) == 3


def test_opt_output_is_byte_identical(tmp_path, monkeypatch):
    args = ["opt", "--engine", "qr", "--l", "3", "--problem", "broyden", "--d", "12", "--seeds", "0..3",
            "--budget", "30"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    monkeypatch.setenv("SUBSPACE_OPT_THREADS", "4")
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    for p in sorted((tmp_path / "a").iterdir()):
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_opt_cubic_engine(tmp_path):
    rc = main(["opt", "--engine", "arc", "--l", "3", "--problem", "trigonometric", "--d", "8", "--budget", "20",
               "--out", str(tmp_path)])
    assert rc == EXIT_OK and (tmp_path / "trace_trigonometric_arc_seed0.csv").exists()


def test_opt_cubic_variant_flags(tmp_path):
    rc = main(["opt", "--engine", "arc", "--l", "3", "--problem", "powell", "--d", "8", "--budget", "10",
               "--truth-variant", "hessian_embedding", "--arc-second-order", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    assert main(["opt", "--engine", "arc", "--truth-variant", "nope", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_nlls_profiles(tmp_path):
    rc = main(["nlls", "--problems", "rosenbrock,broyden", "--ensembles", "gaussian,sampling", "--l", "2,4",
               "--d", "8", "--seeds", "0..1", "--alpha-grid", "0..5", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    res = rows(tmp_path / "results.csv")
    assert len(res) == 2 * 2 * 2 * 2
    assert all(r["wall_time"] == "" for r in res)
    prof = rows(tmp_path / "profile.csv")
    assert [r["alpha"] for r in prof] == [repr(float(a)) for a in range(6)]
    for s in ("gaussian-l2", "gaussian-l4", "sampling-l2", "sampling-l4"):
        pi = [float(r[s]) for r in prof]
        assert all(0 <= a <= b <= 1 for a, b in zip(pi, pi[1:]))


def test_lls_solve_dense_and_sparse(tmp_path):
    g = np.random.default_rng(0)
    A = g.standard_normal((60, 5))
    b = g.standard_normal(60)
    write_matrix(tmp_path / "A.mtx", A)
    write_vector(tmp_path / "b.vec", b)
    rc = main(["lls", "solve", "--matrix", str(tmp_path / "A.mtx"), "--rhs", str(tmp_path / "b.vec"),
               "--tau-r", "1e-12", "--out-x", str(tmp_path / "x.vec"), "--out-diag", str(tmp_path / "d.csv")])
    assert rc == EXIT_OK
    x = read_vector(tmp_path / "x.vec")
    assert x == pytest.approx(np.linalg.lstsq(A, b, rcond=None)[0], rel=1e-8)
    diag = rows(tmp_path / "d.csv")[0]
    assert diag["ensemble"] == "hrht" and int(diag["rank"]) == 5 and diag["converged"] == "1"

    M = sp.random(80, 6, density=0.2, random_state=1, format="coo") + sp.eye(80, 6)
    write_matrix(tmp_path / "S.mtx", M.tocoo())
    rc = main(["lls", "solve", "--matrix", str(tmp_path / "S.mtx"), "--tau-r", "1e-12",
               "--out-x", str(tmp_path / "xs.vec"), "--out-diag", str(tmp_path / "ds.csv")])
    assert rc == EXIT_OK
    xs = read_vector(tmp_path / "xs.vec")
    assert xs == pytest.approx(np.linalg.lstsq(M.toarray(), np.ones(80), rcond=None)[0], rel=1e-8)


def test_lls_it_max_is_a_breakdown(tmp_path):
    g = np.random.default_rng(1)
    A = g.standard_normal((60, 8)) @ np.diag(np.geomspace(1, 1e-6, 8))
    write_matrix(tmp_path / "A.mtx", A)
    rc = main(["lls", "solve", "--matrix", str(tmp_path / "A.mtx"), "--m", "9", "--ensemble", "hashing_s",
               "--s", "1", "--it-max", "1", "--tau-r", "1e-15", "--out-x", str(tmp_path / "x.vec"),
               "--out-diag", str(tmp_path / "d.csv")])
    assert rc == EXIT_BREAKDOWN
    assert (tmp_path / "x.vec").exists()


def test_sketch_bench(tmp_path):
    out = tmp_path / "bench.csv"
    rc = main(["sketch-bench", "--ensemble", "hashing_s", "--s", "2", "--l", "32", "--d", "256",
               "--trials", "500", "--norm-trials", "20", "--out", str(out)])
    assert rc == EXIT_OK
    r = rows(out)[0]
    assert r["ensemble"] == "hashing_s" and r["failure_bound"] == ""
    assert 0.0 <= float(r["failure_rate"]) <= 1.0
    rc = main(["sketch-bench", "--ensemble", "gaussian", "--l", "64", "--d", "256", "--trials", "500",
               "--norm-trials", "20", "--out", str(out)])
    r = rows(out)[0]
    assert rc == EXIT_OK and float(r["failure_rate"]) <= float(r["failure_bound"]) + 0.03
    assert float(r["max_norm"]) <= float(r["norm_bound"])


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("engine = qr\nl = 3\nproblem = broyden\nd = 8\nbudget = 10\n")
    assert read_config(cfg)["engine"] == "qr"
    rc = main(["--config", str(cfg), "opt", "--engine", "tr", "--out", str(tmp_path / "o")])
    assert rc == EXIT_OK
    assert (tmp_path / "o" / "trace_broyden_tridiagonal_tr_seed0.csv").exists()
    assert len(rows(tmp_path / "o" / "trace_broyden_tridiagonal_tr_seed0.csv")) <= 10


def test_config_supplies_required_matrix(tmp_path):
    write_matrix(tmp_path / "A.mtx", np.vstack([np.eye(4)] * 5))
    cfg = tmp_path / "lls.cfg"
    cfg.write_text(f"matrix = {tmp_path / 'A.mtx'}\nmin-norm = true\n")
    rc = main(["--config", str(cfg), "lls", "solve", "--out-x", str(tmp_path / "x.vec"),
               "--out-diag", str(tmp_path / "d.csv")])
    assert rc == EXIT_OK
    assert read_vector(tmp_path / "x.vec") == pytest.approx(np.ones(4))
    assert rows(tmp_path / "d.csv")[0]["m"] == "7"


@pytest.mark.parametrize("argv", [
    ["opt", "--gamma1", "1.5"],
    ["opt", "--ensemble", "nope"],
    ["opt", "--seeds", "x"],
    ["opt", "--problem", "nope"],
    ["lls", "solve", "--matrix", "/nonexistent/A.mtx"],
    ["sketch-bench", "--l", "0", "--d", "8"],
    ["frobnicate"],
])
def test_config_errors(argv, tmp_path):
    assert main(argv + ([] if argv[0] in ("lls", "frobnicate") else ["--out", str(tmp_path / "o")])) == EXIT_CONFIG


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_key = 1\n")
    assert main(["--config", str(cfg), "opt", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_verify_quick(capsys):
    rc = main(["verify", "--suite", "arc", "--scale", "0.05"])
    out = capsys.readouterr().out
    assert rc == EXIT_OK
    assert "PASS" in out and "FAIL" not in out


def test_verify_reports_failure(capsys):
    rc = main(["verify", "--suite", "sketch", "--scale", "0.05"])
    assert rc == EXIT_VERIFY
    assert "FAIL" in capsys.readouterr().out
