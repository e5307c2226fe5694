import hashlib
import json
import time

import numpy as np
import pytest

from ridgevar import io
from ridgevar.cli import main
from ridgevar.estimators import PenaltyMatrix, rls_fit
from ridgevar.inference import standard_cov
from ridgevar.irf import delta_method_bands
from ridgevar.var_core import VarModel, build_regression, benchmark_var2, simulate
from ridgevar.tuning import CvPlan, PenaltySearchSpace, select_penalty


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    err = capsys.readouterr().err.strip()
    # argparse may print usage text first; the machine-readable reason is the last line
    return code, (json.loads(err.splitlines()[-1]) if err else None)


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def series_csv(tmp_path, capsys):
    code, _ = run(capsys, "simulate", "--builtin", "benchmark", "--T", 200, "--seed", 1, "--allow-unstable",
                  "--output-dir", tmp_path)
    assert code == 0
    return tmp_path / "series.csv"


# ---------------------------------------------------------------------------
# io


def test_series_csv_roundtrip(tmp_path):
    y = np.random.default_rng(0).normal(size=(3, 20))
    io.write_series_csv(tmp_path / "s.csv", y, ["a", "b", "c"])
    back, names = io.read_series_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(back, y)
    assert names == ["a", "b", "c"]
    (tmp_path / "plain.csv").write_text("1,2\n3,4\n5,6\n")
    back, names = io.read_series_csv(tmp_path / "plain.csv")
    assert names is None and back.shape == (2, 3)
    (tmp_path / "bad.csv").write_text("x,y\n1,oops\n")
    with pytest.raises(ValueError):
        io.read_series_csv(tmp_path / "bad.csv")


def test_model_toml_roundtrip(tmp_path):
    m = VarModel(benchmark_var2().coeffs, benchmark_var2().sigma_u, [0.1, -0.2])
    io.save_model(tmp_path / "m.toml", m)
    back = io.load_model(tmp_path / "m.toml")
    np.testing.assert_array_equal(back.coeffs, m.coeffs)
    np.testing.assert_array_equal(back.sigma_u, m.sigma_u)
    np.testing.assert_array_equal(back.intercept, m.intercept)
    assert "A_2" in (tmp_path / "m.toml").read_text()
    with pytest.raises(ValueError):
        io.model_from_dict({"K": 2, "p": 1, "sigma_u": [[1, 0], [0, 1]]})


def test_scenario_document(tmp_path):
    (tmp_path / "s.toml").write_text(
        'T = 100\nB = 3\np_fit = 2\nH = 8\nhorizons = [1, 4, 8]\n'
        '[dgp]\nbuiltin = "benchmark"\nrho = 0.9\n'
        '[cv]\nscheme = "block_cv"\nfolds = 4\n'
        '[[methods]]\nname = "ls"\n[[methods]]\nname = "ridge-as"\nlabel = "as1"\nparams = { split_lag = 1 }\n'
    )
    sc = io.load_scenario(tmp_path / "s.toml", B=5)
    assert sc.B == 5 and sc.plan.folds == 4 and sc.methods[1].column == "as1"
    (tmp_path / "bad.toml").write_text('T = 100\nB = 3\np_fit = 2\ncolour = 1\n[dgp]\nbuiltin = "benchmark"\n')
    with pytest.raises(ValueError):
        io.load_scenario(tmp_path / "bad.toml")


# ---------------------------------------------------------------------------
# simulate


def test_simulate_shape_and_determinism(tmp_path, series_csv, capsys):
    y, _ = io.read_series_csv(series_csv)
    assert y.shape == (2, 200)
    np.testing.assert_array_equal(y, simulate(benchmark_var2(), 200, seed=1, allow_unstable=True))
    run(capsys, "simulate", "--builtin", "benchmark", "--T", 200, "--seed", 1, "--allow-unstable",
        "--output-dir", tmp_path / "again")
    assert sha(series_csv) == sha(tmp_path / "again" / "series.csv")


def test_simulate_unstable_model_file(tmp_path, capsys):
    io.save_model(tmp_path / "m.toml", VarModel(np.eye(2)[None] * 1.01, np.eye(2)))
    code, err = run(capsys, "simulate", "--model", tmp_path / "m.toml", "--T", 50, "--output-dir", tmp_path)
    assert code == 2 and err["error"] == "unstable_dgp"
    code, err = run(capsys, "simulate", "--builtin", "benchmark", "--T", 50, "--output-dir", tmp_path)
    assert code == 2 and err["error"] == "unstable_dgp"


def test_manifest_and_replay(tmp_path, series_csv, capsys):
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["config"]["burn_in"] == 200
    assert manifest["outputs"]["series.csv"] == sha(series_csv)
    code, _ = run(capsys, "replay", tmp_path / "manifest.json", "--output-dir", tmp_path / "re")
    assert code == 0 and sha(tmp_path / "re" / "series.csv") == sha(series_csv)


# ---------------------------------------------------------------------------
# fit / irf / tune


def test_fit_ls_close_to_truth(tmp_path, series_csv, capsys):
    code, _ = run(capsys, "fit", "--data", series_csv, "--p", 2, "--method", "ls", "--output-dir", tmp_path / "f")
    assert code == 0
    doc = json.loads((tmp_path / "f" / "fit.json").read_text())
    assert np.abs(np.array(doc["coefficients"]) - benchmark_var2().coeffs).max() < 0.15


def test_fit_ridge_lambda_file_matches_library(tmp_path, series_csv, capsys):
    (tmp_path / "lam.csv").write_text("2.5\n40\n")
    code, _ = run(capsys, "fit", "--data", series_csv, "--p", 2, "--method", "ridge", "--lam-file",
                  tmp_path / "lam.csv", "--output-dir", tmp_path / "f")
    assert code == 0
    y, _ = io.read_series_csv(series_csv)
    fit = rls_fit(build_regression(y, 2, intercept=True), PenaltyMatrix.lag_adapted([2.5, 40.0], 2))
    assert (tmp_path / "f" / "fit.json").read_text() == json.dumps(fit.to_dict(), indent=2, default=float)


def test_fit_errors(tmp_path, series_csv, capsys):
    code, err = run(capsys, "fit", "--data", series_csv, "--p", 2, "--method", "rlp", "--lam", 1,
                    "--output-dir", tmp_path)
    assert code == 2 and err["error"] == "missing_lp_horizon"
    code, err = run(capsys, "fit", "--data", series_csv, "--p", 2, "--method", "ridge", "--lam-lags", "1,2,3",
                    "--output-dir", tmp_path)
    assert code == 2 and err["error"] == "dimension_mismatch"
    code, err = run(capsys, "fit", "--data", series_csv, "--p", 2, "--method", "magic", "--output-dir", tmp_path)
    assert code == 2
    code, err = run(capsys, "fit", "--data", series_csv, "--p", 2, "--method", "ridge", "--tune",
                    "--output-dir", tmp_path)
    assert code == 2 and err["error"] == "missing_scheme"


def test_fit_numerical_failure_exit_code(tmp_path, capsys):
    io.write_series_csv(tmp_path / "s.csv", np.tile(np.arange(1.0, 41.0), (2, 1)))
    code, err = run(capsys, "fit", "--data", tmp_path / "s.csv", "--p", 1, "--method", "ls", "--output-dir", tmp_path)
    assert code == 3 and err["error"] == "numerical_failure"


@pytest.mark.parametrize(
    "extra",
    [
        ["--method", "ridge-gls", "--lam", 3],
        ["--method", "ridge-as", "--split-lag", 1, "--tune", "--scheme", "block_cv"],
        ["--method", "minnesota", "--tune", "--scheme", "out_of_sample"],
        ["--method", "hierarchical-mean", "--xi", 0.5],
        ["--method", "lp", "--H", 6],
        ["--method", "rlp", "--lam", 5, "--H", 4],
    ],
)
def test_fit_methods_run(tmp_path, series_csv, capsys, extra):
    code, err = run(capsys, "fit", "--data", series_csv, "--p", 2, *extra, "--output-dir", tmp_path / "f")
    assert code == 0, err
    assert json.loads((tmp_path / "f" / "fit.json").read_text())["method"] in extra


def test_irf_long_csv_matches_library(tmp_path, series_csv, capsys):
    code, _ = run(capsys, "irf", "--data", series_csv, "--p", 2, "--method", "ls", "--horizon", 10,
                  "--level", 0.9, "--output-dir", tmp_path / "i")
    assert code == 0
    lines = (tmp_path / "i" / "irf.csv").read_text().splitlines()
    assert lines[0] == "response_var,shock_var,horizon,point,lower,upper"
    rows = [l.split(",") for l in lines[1:]]
    assert len(rows) == 4 * 11
    for k in range(2):
        for m in range(2):
            assert sum(1 for r in rows if r[0] == str(k) and r[1] == str(m)) == 11
    from ridgevar.estimators import ls_fit

    fit = ls_fit(build_regression(io.read_series_csv(series_csv)[0], 2, intercept=True))
    res = delta_method_bands(fit, standard_cov(fit), 10, 0.9)
    first = rows[5]
    assert float(first[3]) == res.theta[5, 0, 0] and float(first[5]) == res.upper[5, 0, 0]


def test_tune_outputs_match_library(tmp_path, series_csv, capsys):
    code, _ = run(capsys, "tune", "--data", series_csv, "--p", 2, "--scheme", "block_nondep_cv", "--folds", 5,
                  "--seed", 3, "--output-dir", tmp_path / "t")
    assert code == 0
    lam = np.loadtxt(tmp_path / "t" / "lambda.csv", delimiter=",", skiprows=1)
    data = build_regression(io.read_series_csv(series_csv)[0], 2, intercept=True)
    sel = select_penalty(data, PenaltySearchSpace.for_data(data), CvPlan("block_nondep_cv"), seed=3)
    np.testing.assert_array_equal(lam[:, 1], sel.lambdas)
    trace = (tmp_path / "t" / "trace.csv").read_text().splitlines()
    assert trace[0] == "evaluation,x1,x2,loss" and len(trace) == sel.n_evals + 1
    code, err = run(capsys, "tune", "--data", series_csv, "--p", 2, "--output-dir", tmp_path / "t2")
    assert code == 2 and err["error"] == "missing_scheme"
    code, _ = run(capsys, "fit", "--data", series_csv, "--p", 2, "--method", "ridge",
                  "--lam-file", tmp_path / "t" / "lambda.csv", "--output-dir", tmp_path / "f")
    assert code == 0
    fitted = json.loads(next((tmp_path / "f").glob("fit*.json")).read_text())
    assert fitted["method"] == "ridge"


def test_mc_smoke_under_a_minute(tmp_path, capsys):
    (tmp_path / "s.toml").write_text(
        'T = 200\nB = 50\np_fit = 2\nallow_unstable = true\n[dgp]\nbuiltin = "benchmark"\n'
        '[[methods]]\nname = "ls"\n[[methods]]\nname = "ridge"\n[[methods]]\nname = "lp"\n'
    )
    start = time.perf_counter()
    code, err = run(capsys, "mc", "--scenario", tmp_path / "s.toml", "--B", 10, "--output-dir", tmp_path / "o")
    assert code == 0, err
    assert time.perf_counter() - start < 60
    meta = json.loads((tmp_path / "o" / "mc_meta.json").read_text())
    assert meta["B"] == 10
    assert (tmp_path / "o" / "mc_relative_mse.csv").exists()
    assert (tmp_path / "o" / "manifest.json").exists()
