"""End-to-end tests for the command-line harness.

These run main() in-process with tmp_path outputs, checking artifacts, exit
codes, and determinism of the full sample -> train -> optimize chain.
"""

import numpy as np
import pytest

from surropt.cli import ConfigError, main, parse_config
from surropt.sampling import Dataset
from surropt.surrogate import MlpSurrogate, serialize


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def test_parse_config_sections_and_types():
    cfg = parse_config(
        """
        # a comment
        problem = camel2
        budget = 500          # trailing comment
        hidden_dims = 32, 32
        learning_rate = 5e-4
        validate = yes
        hessian_mode = bfgs
        """
    )
    assert cfg["run"]["problem"] == "camel2"
    assert cfg["run"]["validate"] is True
    assert cfg["sampling"]["budget"] == 500
    assert cfg["training"]["hidden_dims"] == (32, 32)
    assert cfg["training"]["learning_rate"] == 5e-4
    assert cfg["sqp"]["hessian_mode"] == "bfgs"


def test_parse_config_rejects_unknown_key():
    with pytest.raises(ConfigError, match="line 2.*unknown"):
        parse_config("budget = 100\nbudgett = 5\n")


def test_parse_config_rejects_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("budget = 100\nbudget = 200\n")


def test_parse_config_rejects_bad_value():
    with pytest.raises(ConfigError, match="line 1.*bad value"):
        parse_config("budget = lots\n")


def test_parse_config_rejects_missing_equals():
    with pytest.raises(ConfigError, match="key = value"):
        parse_config("budget 100\n")


def test_parse_config_accepts_weight_decay():
    cfg = parse_config("weight_decay = 0.05\n")
    assert cfg["training"]["weight_decay"] == 0.05


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------


def _write_cfg(tmp_path, text, name="cfg.txt"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_sample_writes_artifacts(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "problem = camel2\nbudget = 120\n")
    out = tmp_path / "run"
    rc = main(["sample", "--config", cfg, "--seed", "3", "--out", str(out)])
    assert rc == 0
    data = Dataset.from_csv((out / "dataset.csv").read_text())
    assert len(data) == 120
    report = (out / "sampling_report.txt").read_text()
    assert "feasible_fraction" in report and "problem = camel2" in report


def test_sample_deterministic_across_runs(tmp_path):
    cfg = _write_cfg(tmp_path, "problem = camel2\nbudget = 80\n")
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["sample", "--config", cfg, "--seed", "7", "--out", str(out1)]) == 0
    assert main(["sample", "--config", cfg, "--seed", "7", "--out", str(out2)]) == 0
    assert (out1 / "dataset.csv").read_text() == (out2 / "dataset.csv").read_text()


def test_sample_unknown_problem_fails(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "problem = nosuch\nbudget = 50\n")
    assert main(["sample", "--config", cfg, "--out", str(tmp_path / "x")]) == 1
    assert "unknown problem" in capsys.readouterr().err


def test_sample_requires_budget(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "problem = camel2\n")
    assert main(["sample", "--config", cfg, "--out", str(tmp_path / "x")]) == 1


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _linear_dataset_csv(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2))
    Y = (3 * X[:, 0] - 2 * X[:, 1] + 0.5)[:, None]
    d = Dataset(
        X=X,
        Y=Y,
        feasible=np.ones(n, dtype=bool),
        valid=np.ones(n, dtype=bool),
        provenance=["initial"] * n,
    )
    return d.to_csv()


def test_train_linear_synthetic(tmp_path, capsys):
    data_path = tmp_path / "data.csv"
    data_path.write_text(_linear_dataset_csv())
    cfg = _write_cfg(tmp_path, "hidden_dims = 16\nepochs = 600\nweight_decay = 0\n")
    out = tmp_path / "fit"
    rc = main(["train", "--data", str(data_path), "--config", cfg, "--out", str(out)])
    assert rc == 0
    metrics = dict(
        line.split(" = ") for line in (out / "train_metrics.txt").read_text().splitlines()
    )
    assert float(metrics["output0_test_r2"]) >= 0.999
    assert (out / "model.txt").exists()


def test_train_rejects_tiny_dataset(tmp_path, capsys):
    data_path = tmp_path / "data.csv"
    data_path.write_text(_linear_dataset_csv(n=10))
    rc = main(["train", "--data", str(data_path), "--out", str(tmp_path / "fit")])
    assert rc == 1
    assert "too small" in capsys.readouterr().err


def test_train_corrupt_csv_reports_row(tmp_path, capsys):
    good = _linear_dataset_csv(n=30).splitlines()
    good[5] = "not,numbers,at,all"
    data_path = tmp_path / "data.csv"
    data_path.write_text("\n".join(good) + "\n")
    rc = main(["train", "--data", str(data_path), "--out", str(tmp_path / "fit")])
    assert rc == 1


# ---------------------------------------------------------------------------
# optimize / validate
# ---------------------------------------------------------------------------


def _paraboloid_model(dim=2, center=0.25):
    """Hand-built exact MLP for a smooth bowl-like function.

    A single wide Swish layer trained offline would do; instead use an
    analytic construction u(x) = sum swish(x_i - c) + swish(c - x_i), which
    has its minimum at x = c per coordinate (swish(z)+swish(-z) = z*(2s(z)-1)
    is even, zero at 0, increasing in |z|).
    """
    W0 = np.vstack([np.eye(dim), -np.eye(dim)])
    b0 = np.concatenate([np.full(dim, -center), np.full(dim, center)])
    W1 = np.ones((1, 2 * dim))
    b1 = np.zeros(1)
    return MlpSurrogate(
        [dim, 2 * dim, 1],
        [W0, W1],
        [b0, b1],
        np.zeros(dim),
        np.ones(dim),
        np.zeros(1),
        np.ones(1),
    )


def test_optimize_converges_and_writes_artifacts(tmp_path, capsys):
    model_path = tmp_path / "model.txt"
    model_path.write_text(serialize(_paraboloid_model()))
    out = tmp_path / "opt"
    rc = main(
        ["optimize", "--model", str(model_path), "--problem", "camel2", "--out", str(out)]
    )
    assert rc == 0
    summary = (out / "summary.txt").read_text()
    assert "status = converged" in summary
    trace = (out / "trace.csv").read_text().splitlines()
    assert trace[0] == "iter,f_pred,f_true,step_norm,infeasibility,alpha,accepted"
    assert len(trace) > 1


def test_optimize_needs_problem(tmp_path, capsys):
    model_path = tmp_path / "model.txt"
    model_path.write_text(serialize(_paraboloid_model()))
    rc = main(["optimize", "--model", str(model_path), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "needs --problem" in capsys.readouterr().err


def test_optimize_dimension_mismatch(tmp_path, capsys):
    model_path = tmp_path / "model.txt"
    model_path.write_text(serialize(_paraboloid_model(dim=3)))
    rc = main(
        ["optimize", "--model", str(model_path), "--problem", "camel2",
         "--out", str(tmp_path / "o")]
    )
    assert rc == 1
    assert "inputs" in capsys.readouterr().err


def test_validate_reports_r2(tmp_path, capsys):
    model_path = tmp_path / "model.txt"
    model_path.write_text(serialize(_paraboloid_model()))
    out = tmp_path / "val"
    rc = main(
        ["validate", "--model", str(model_path), "--problem", "camel2",
         "--n", "50", "--out", str(out)]
    )
    assert rc == 0
    report = (out / "validation_report.txt").read_text()
    assert "output0_r2" in report and "points = 50" in report


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------


def test_benchmark_single_trial(tmp_path, capsys):
    cfg = _write_cfg(
        tmp_path,
        "problem = camel2\n"
        "budget = 150\n"
        "n_trials = 1\n"
        "hidden_dims = 16 16\n"
        "epochs = 300\n"
        "early_stop_patience = 50\n",
    )
    out = tmp_path / "bench"
    rc = main(["benchmark", "--config", cfg, "--out", str(out)])
    assert rc == 0
    trials = (out / "trials.csv").read_text().splitlines()
    assert len(trials) == 2  # header + 1 trial
    agg = (out / "aggregates.txt").read_text()
    assert "f_true_median" in agg and "n_failed = 0" in agg


def test_usage_error_exits_one():
    with pytest.raises(SystemExit) as exc:
        main(["optimize"])  # missing required --model
    assert exc.value.code == 1
