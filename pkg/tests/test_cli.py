import json

import numpy as np
import pytest

from imubridge import cli
from imubridge.experiments import (
    PREINT_BY_PROP,
    PROP_BY_PREINT,
    DiffMatrix,
    ExperimentConfig,
    entrywise_diff,
    load_config,
    read_matrix_csv,
    run_experiment,
    write_outputs,
)
from imubridge.selftest import run_selftest

SMALL = ExperimentConfig(trials=2, duration=0.5)


def test_entrywise_diff_branches():
    assert entrywise_diff([[2.0]], [[1.0]])[0, 0] == 0.5
    assert entrywise_diff([[1e-5]], [[0.0]])[0, 0] == 1e-5
    assert entrywise_diff([[-3.0, 0.0]], [[-3.0, 0.0]]).tolist() == [[0.0, 0.0]]
    # boundary belongs to the absolute branch
    assert entrywise_diff([[1e-4]], [[0.0]])[0, 0] == 1e-4
    with pytest.raises(ValueError):
        entrywise_diff(np.zeros((2, 2)), np.zeros((2, 3)))


def test_diff_matrix_rejects_negative():
    with pytest.raises(ValueError):
        DiffMatrix(np.array([[-1.0]]), "J_b", "tangent", 1)


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text("[experiment]\ntrials = 3\nconventions = manifold\n\n[noise]\nsigma_a = 0.5\nmeasurement_noise = yes\n")
    cfg = load_config(path)
    assert cfg.trials == 3 and cfg.conventions == ("manifold",) and cfg.sigma_a == 0.5 and cfg.measurement_noise
    assert cfg.with_overrides(trials=7, seed=None).trials == 7
    bad = tmp_path / "bad.ini"
    bad.write_text("[x]\ncolour = blue\n")
    with pytest.raises(ValueError):
        load_config(bad)
    with pytest.raises(ValueError):
        ExperimentConfig(conventions=("diagonal",))


def test_initial_covariance_defaults():
    d = np.sqrt(np.diag(ExperimentConfig().initial_cov()))
    assert np.allclose(d, np.repeat([0.01, 0.1, 0.05, 0.001, 0.01], 3))


@pytest.mark.parametrize("experiment", [PREINT_BY_PROP, PROP_BY_PREINT])
def test_outputs_named_and_deterministic(tmp_path, experiment):
    a = write_outputs(run_experiment(experiment, SMALL), tmp_path / "a")
    b = write_outputs(run_experiment(experiment, SMALL), tmp_path / "b")
    names = sorted(p.name for p in a)
    qty = "J_b" if experiment == PREINT_BY_PROP else "Phi"
    assert names == sorted(
        [f"{experiment}_{c}_{q}.csv" for c in ("tangent", "manifold") for q in (qty, "Sigma")] + [f"{experiment}_report.txt"]
    )
    for pa, pb in zip(sorted(a), sorted(b)):
        assert pa.read_bytes() == pb.read_bytes()


def test_parallel_matches_serial(tmp_path):
    serial = write_outputs(run_experiment(PREINT_BY_PROP, SMALL), tmp_path / "s")
    par_cfg = SMALL.with_overrides(workers=2)
    parallel = write_outputs(run_experiment(PREINT_BY_PROP, par_cfg), tmp_path / "p")
    for ps, pp in zip(sorted(serial), sorted(parallel)):
        if ps.suffix == ".csv":
            assert ps.read_bytes() == pp.read_bytes()


def test_mean_is_average_of_trials():
    cfg = SMALL.with_overrides(per_trial=True)
    res = run_experiment(PROP_BY_PREINT, cfg)
    key = ("tangent", "Phi")
    manual = (res.per_trial[0][key] + res.per_trial[1][key]) / 2
    assert np.array_equal(res.means[key].values, manual)


def test_zero_duration_phi_diff_is_zero():
    res = run_experiment(PROP_BY_PREINT, ExperimentConfig(trials=2, duration=0.0))
    assert np.array_equal(res.means[("tangent", "Phi")].values, np.zeros((15, 15)))
    assert res.passed


def test_cli_preint_by_prop_exit_codes(tmp_path, capsys):
    args = ["preint-by-prop", "--trials", "1", "--duration", "0.5", "--out", str(tmp_path)]
    assert cli.main(args + ["--threshold", "1.0"]) == 0
    assert "overall = PASS" in capsys.readouterr().out
    assert cli.main(args + ["--threshold", "0"]) == 1
    assert len(list(tmp_path.glob("preint_by_prop_*.csv"))) == 4


def test_cli_per_trial_and_convention(tmp_path):
    args = ["prop-by-preint", "--trials", "2", "--duration", "0.2", "--convention", "forster", "--per-trial",
            "--threshold", "1", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    names = sorted(p.name for p in tmp_path.glob("*.csv"))
    assert "prop_by_preint_forster_Phi.csv" in names
    assert "prop_by_preint_forster_Phi_trial0001.csv" in names
    assert read_matrix_csv(tmp_path / "prop_by_preint_forster_Phi.csv").shape == (15, 15)


def test_cli_config_file(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[experiment]\ntrials = 1\nduration = 0.2\nthreshold = 1\n")
    assert cli.main(["preint-by-prop", "--config", str(ini), "--out", str(tmp_path / "o")]) == 0
    report = (tmp_path / "o" / "preint_by_prop_report.txt").read_text()
    assert "trials = 1" in report and "init_sigma_p = 0.1" in report


def test_cli_bad_config_reports_error(tmp_path, capsys):
    ini = tmp_path / "c.ini"
    ini.write_text("[experiment]\nbogus = 1\n")
    assert cli.main(["preint-by-prop", "--config", str(ini), "--out", str(tmp_path)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_cli_simulate_preintegrate_propagate(tmp_path, capsys):
    csv_path = tmp_path / "imu.csv"
    state = tmp_path / "x0.json"
    assert cli.main(["simulate", "--duration", "0.5", "--out", str(csv_path), "--state-out", str(state)]) == 0
    assert len(csv_path.read_text().splitlines()) == 102
    out = tmp_path / "pm.json"
    assert cli.main(["preintegrate", str(csv_path), "--convention", "manifold", "--out", str(out)]) == 0
    pm = json.loads(out.read_text())
    assert pm["convention"] == "manifold" and np.array(pm["J_b"]).shape == (15, 6)
    capsys.readouterr()
    assert cli.main(["propagate", str(csv_path), "--state", str(state), "--init-sigma", "0.01"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert np.array(res["phi"]).shape == (15, 15)


def test_selftest_passes_and_detects_fault():
    assert all(r.passed for r in run_selftest())
    faulty = {r.name: r.passed for r in run_selftest("pb-sign")}
    assert not faulty["preint-by-prop bias Jacobian equivalence"]


def test_cli_selftest_exit_codes(capsys):
    assert cli.main(["selftest"]) == 0
    assert cli.main(["selftest", "--inject-fault", "pb-sign"]) == 1
    assert "FAIL" in capsys.readouterr().out
