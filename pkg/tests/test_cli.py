import json

import numpy as np
import pytest
from scipy import stats

from gpsim import io
from gpsim.cli import EXIT_NUMERICAL, EXIT_USAGE, main
from gpsim.experiments import SINUSOID_BETA, sinusoid_link

from conftest import make_chain

SMALL = {"seed": 4, "data": {"generator": "sinusoid", "n": 20}, "mcmc": {"n_iter": 300, "burn_in": 100}}


def write_cfg(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture(scope="module")
def fitted(tmp_path_factory):
    d = tmp_path_factory.mktemp("fit")
    cfg = write_cfg(d / "cfg.json", SMALL)
    assert main(["fit", "--config", cfg, "--out", str(d / "out")]) == 0
    return d, cfg


def test_fit_outputs(fitted):
    d, _ = fitted
    out = d / "out"
    header, rows = io.read_table(out / "chain.csv")
    assert header == ["iter", "beta_1", "beta_2", "beta_3", "beta_4", "eta", "log_post"]
    assert rows.shape == (100, 4 + 3)
    manifest = json.loads((out / "manifest.json").read_text())
    for name in manifest["outputs"]:
        assert (out / name).exists()
    assert manifest["seed"] == 4 and manifest["command"] == "fit"
    acc = json.loads((out / "acceptance.json").read_text())
    assert 0 <= acc["accept_eta"] <= 1 and 0 <= acc["accept_params"] <= 1
    strad = (out / "straddle.csv").read_text().splitlines()
    assert strad[0] == "param,frac_below_zero,frac_above_zero"
    assert len(strad) == 5


def test_fit_is_byte_identical(fitted, tmp_path):
    d, cfg = fitted
    assert main(["fit", "--config", cfg, "--out", str(tmp_path)]) == 0
    for name in ("chain.csv", "data.csv", "acceptance.json", "straddle.csv"):
        assert (tmp_path / name).read_bytes() == (d / "out" / name).read_bytes()


def test_seed_override_changes_chain(fitted, tmp_path):
    d, cfg = fitted
    assert main(["fit", "--config", cfg, "--seed", "5", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "chain.csv").read_bytes() != (d / "out" / "chain.csv").read_bytes()


def test_usage_errors(tmp_path, fitted):
    d, _ = fitted
    assert main(["fit", "--config", str(tmp_path / "missing.json")]) == EXIT_USAGE
    bad = write_cfg(tmp_path / "bad.json", {"mcmc": {"n_iter": "many"}})
    assert main(["fit", "--config", bad]) == EXIT_USAGE
    extra = write_cfg(tmp_path / "extra.json", {"colour": "blue"})
    assert main(["fit", "--config", extra]) == EXIT_USAGE
    (tmp_path / "pts.csv").write_text("x1,x2\n0.5,0.5\n")
    args = ["--chain", str(d / "out" / "chain.csv"), "--data", str(d / "out" / "data.csv")]
    assert main(["predict", *args, "--points", str(tmp_path / "pts.csv"), "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["reconcile", "--chain", str(d / "out" / "chain.csv"), "--out", str(tmp_path)]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--threads", "0"])
    assert exc.value.code == 2


def test_schema_error_names_field(tmp_path, capsys):
    bad = write_cfg(tmp_path / "bad.json", {"mcmc": {"n_iter": "many"}})
    main(["fit", "--config", bad])
    assert "mcmc/n_iter" in capsys.readouterr().err


def test_predict_single_point(fitted, tmp_path):
    d, cfg = fitted
    (tmp_path / "pts.csv").write_text("x1,x2,x3,x4\n0.2,0.4,0.6,0.8\n")
    rc = main([
        "predict", "--config", cfg, "--chain", str(d / "out" / "chain.csv"),
        "--data", str(d / "out" / "data.csv"), "--points", str(tmp_path / "pts.csv"),
        "--out", str(tmp_path / "p"),
    ])
    assert rc == 0
    header, rows = io.read_table(tmp_path / "p" / "predictions.csv")
    assert header == ["x_1", "x_2", "x_3", "x_4", "mean", "sd", "q_lo", "q_hi", "mean_index"]
    assert rows.shape == (1, 9)
    lo, mean, hi = rows[0, 6], rows[0, 4], rows[0, 7]
    assert lo < mean < hi and rows[0, 5] > 0


def test_reconcile_outputs(tmp_path, rng):
    v = SINUSOID_BETA / np.linalg.norm(SINUSOID_BETA)
    B = 2 * v + 0.05 * rng.standard_normal((60, 4))
    plant = np.zeros(60, dtype=bool)
    plant[::3] = True
    B[plant] *= -1
    io.write_chain(tmp_path / "chain.csv", make_chain(B))
    io.write_dataset(tmp_path / "ref.csv", rng.uniform(size=(50, 4)), np.zeros(50))
    for method in ("index", "anchor", "covariance"):
        out = tmp_path / method
        rc = main(["reconcile", "--chain", str(tmp_path / "chain.csv"), "--method", method,
                   "--reference", str(tmp_path / "ref.csv"), "--out", str(out)])
        assert rc == 0
        _, flips = io.read_table(out / "flips.csv")
        np.testing.assert_array_equal(flips[:, 1].astype(bool), plant)
        rec = io.read_chain(out / "reconciled_chain.csv")
        assert np.all(rec.beta @ v > 0)
        # a second pass has nothing left to flip
        rc = main(["reconcile", "--chain", str(out / "reconciled_chain.csv"), "--method", method,
                   "--reference", str(tmp_path / "ref.csv"), "--out", str(out / "again")])
        assert rc == 0
        _, again = io.read_table(out / "again" / "flips.csv")
        assert not again[:, 1].any()
    for name in ("normalized_beta.csv", "beta_boxplot.csv", "implied_theta.csv", "point_estimate.csv"):
        assert (tmp_path / "anchor" / name).exists()


def test_reconcile_failure_exit_code(tmp_path, capsys):
    B = np.zeros((20, 3))
    B[::10] = [[5.0, -3.0, 2.0], [-4.0, 6.0, -1.0]]
    io.write_chain(tmp_path / "chain.csv", make_chain(B))
    rc = main(["reconcile", "--chain", str(tmp_path / "chain.csv"), "--method", "anchor",
               "--out", str(tmp_path / "o")])
    assert rc == EXIT_NUMERICAL
    assert "index heuristic" in capsys.readouterr().err


def test_benchmark_single_method(tmp_path):
    cfg = {
        "seed": 3,
        "mcmc": {"n_iter": 300, "burn_in": 100},
        "experiment": {"n_train": 12, "n_test": 6, "n_reps": 2, "methods": ["sim"]},
    }
    path = write_cfg(tmp_path / "cfg.json", cfg)
    assert main(["benchmark", "--config", path, "--out", str(tmp_path / "a")]) == 0
    assert main(["benchmark", "--config", path, "--out", str(tmp_path / "b")]) == 0
    text = (tmp_path / "a" / "summary.csv").read_text().splitlines()
    assert text[0] == "stat,sim"
    assert [ln.split(",")[0] for ln in text[1:]] == ["Min.", "1st Qu.", "Median", "Mean", "3rd Qu.", "Max."]
    for name in ("summary.csv", "results.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_design_ranking(fitted, tmp_path):
    d, cfg = fitted
    cands = np.random.default_rng(0).uniform(size=(7, 4))
    io.write_dataset(tmp_path / "cand.csv", cands, np.zeros(7))
    for crit in ("alm", "ei"):
        rc = main([
            "design", "--config", cfg, "--chain", str(d / "out" / "chain.csv"),
            "--data", str(d / "out" / "data.csv"), "--candidates", str(tmp_path / "cand.csv"),
            "--criterion", crit, "--out", str(tmp_path / crit),
        ])
        assert rc == 0
        header, rows = io.read_table(tmp_path / crit / "design.csv")
        assert header[-2:] == ["score", "rank"]
        np.testing.assert_array_equal(rows[:, -1], np.arange(1, 8))
        assert np.all(np.diff(rows[:, -2]) <= 0) and np.all(rows[:, -2] >= 0)


def test_sinusoid_prediction_traces_the_link(tmp_path):
    cfg = write_cfg(tmp_path / "cfg.json", {"seed": 1, "data": {"generator": "sinusoid", "n": 45}})
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "fit")]) == 0
    pts = np.random.default_rng(3).uniform(size=(150, 4))
    io.write_dataset(tmp_path / "pts.csv", pts, np.zeros(150))
    rc = main([
        "predict", "--config", cfg, "--chain", str(tmp_path / "fit" / "chain.csv"),
        "--data", str(tmp_path / "fit" / "data.csv"), "--points", str(tmp_path / "pts.csv"),
        "--sort-by-index", "--max-samples", "200", "--out", str(tmp_path / "pred"),
    ])
    assert rc == 0
    _, rows = io.read_table(tmp_path / "pred" / "predictions.csv")
    X, mean, mean_index = rows[:, :4], rows[:, 4], rows[:, 8]
    assert np.all(np.diff(mean_index) >= 0)
    t = X @ SINUSOID_BETA
    # the estimated index is the true one up to sign and scale
    assert abs(stats.spearmanr(mean_index, t)[0]) > 0.95
    assert np.corrcoef(mean, sinusoid_link(t))[0, 1] > 0.95
