import csv

import pytest

from refpanel.errors import ConfigParse
from refpanel.harness import (
    CALIBRATION_COLUMNS,
    CORRELATION_COLUMNS,
    SWEEP_COLUMNS,
    ExperimentConfig,
    Mode,
    experiment_from_mapping,
    load_experiment,
    run,
)
from refpanel.results import Estimator

PROBLEM = {
    "gamma_x": "0.5",
    "gamma_w": "0.5",
    "h2_x": "0.6",
    "prior.kind": "bernoulli_gaussian",
    "prior.kappa": "0.05",
}


def _read(path):
    lines = path.read_text().splitlines()
    return lines[0], list(csv.DictReader(lines[1:]))


def test_mode_and_grids_are_parsed():
    config = experiment_from_mapping(
        {**PROBLEM, "mode": "theory-sweep", "lambda.min": "0.1", "lambda.max": "10", "lambda.num": "5", "p": "500"}
    )
    assert config.mode is Mode.THEORY_SWEEP
    assert config.lambda_grid == pytest.approx([0.1, 10**-0.5, 1.0, 10**0.5, 10.0])
    assert config.estimators == list(Estimator)
    assert config.p == 500


@pytest.mark.parametrize(
    "values",
    [
        {**PROBLEM, "mode": "theory-sweep"},
        {**PROBLEM, "mode": "sideways", "lambda_grid": "1"},
        {**PROBLEM, "mode": "simulate", "lambda_grid": "1, 0.5"},
        {**PROBLEM, "mode": "simulate", "lambda_grid": "1", "p": "20"},
        {**PROBLEM, "mode": "simulate", "lambda_grid": "1", "estimators": "elastic_net"},
        {"mode": "figure", "figure": "no-such-figure"},
        {"lambda_grid": "1"},
    ],
)
def test_invalid_experiments(values):
    with pytest.raises(ConfigParse):
        experiment_from_mapping(values)


def test_kappa_grid_needs_bernoulli_gaussian():
    values = {
        **PROBLEM,
        "prior.kind": "discrete",
        "prior.atoms": "-1:0.5, 1:0.5",
        "mode": "theory-sweep",
        "lambda_grid": "1",
        "kappa_grid": "0.1, 0.2",
    }
    with pytest.raises(ConfigParse, match="kappa_grid"):
        experiment_from_mapping(values)


def test_overrides_take_precedence(tmp_path):
    path = tmp_path / "sweep.env"
    problem = "\n".join(f"{k} = {v}" for k, v in PROBLEM.items())
    path.write_text("mode = theory-sweep\nlambda_grid = 1\nseed = 3\n" + problem)
    assert load_experiment(path).seed == 3
    overridden = load_experiment(path, seed=5, mode="calibrate", jobs=None)
    assert overridden.seed == 5
    assert overridden.mode is Mode.CALIBRATE
    assert overridden.provenance["config_hash"] != load_experiment(path).provenance["config_hash"]


def test_theory_sweep_is_deterministic(tmp_path):
    config = experiment_from_mapping(
        {**PROBLEM, "mode": "theory-sweep", "lambda_grid": "0.1, 1, 10", "estimators": "ridge, ref_ridge, ref_lasso"},
        source_text="sweep",
    )
    first = run(config, tmp_path / "a")
    second = run(config.model_copy(update={"jobs": 3}), tmp_path / "b")
    assert first.failures == second.failures == 0
    a, b = first.paths[0], second.paths[0]
    assert a.name == "theory_sweep.csv"
    assert a.read_text() == b.read_text()

    provenance, rows = _read(a)
    assert provenance.startswith("# config_hash=")
    assert "seed=0" in provenance
    assert len(rows) == 9
    assert list(rows[0]) == list(SWEEP_COLUMNS)
    assert all(row["mse_emp"] == "" for row in rows)
    assert all(0 <= float(row["r2_theory"]) <= 0.6 for row in rows)


def test_sweep_over_heritability_and_sparsity(tmp_path):
    config = experiment_from_mapping(
        {
            **PROBLEM,
            "mode": "theory-sweep",
            "lambda_grid": "1",
            "estimators": "ref_ridge",
            "kappa_grid": "0.01, 0.1",
            "h2_grid": "0.3, 0.8",
        }
    )
    _, rows = _read(run(config, tmp_path).paths[0])
    pairs = {(row["kappa"], row["h2"]) for row in rows}
    assert pairs == {("0.01", "0.3"), ("0.01", "0.8"), ("0.1", "0.3"), ("0.1", "0.8")}


def test_simulate_adds_empirical_columns(tmp_path):
    config = experiment_from_mapping(
        {**PROBLEM, "mode": "simulate", "lambda_grid": "0.5, 2", "estimators": "ref_ridge", "p": "100", "reps": "3"}
    )
    outcome = run(config, tmp_path)
    assert outcome.paths[0].name == "simulate.csv"
    _, rows = _read(outcome.paths[0])
    assert all(float(row["mse_emp"]) > 0 and float(row["mse_emp_se"]) > 0 for row in rows)


def test_calibration_round_trip(tmp_path):
    config = experiment_from_mapping({**PROBLEM, "gamma_w": "2", "mode": "calibrate", "lambda_grid": "0.3, 3"})
    _, rows = _read(run(config, tmp_path).paths[0])
    assert list(rows[0]) == list(CALIBRATION_COLUMNS)
    for row in rows:
        assert float(row["lambda_roundtrip"]) == pytest.approx(float(row["lambda"]), rel=1e-6)
        assert float(row["alpha"]) > float(row["alpha_min"]) > 0


def test_amp_run_writes_one_trajectory_per_penalty(tmp_path):
    config = experiment_from_mapping(
        {
            **PROBLEM,
            "mode": "amp-run",
            "lambda_grid": "0.5, 2",
            "p": "100",
            "t_max": "5",
            "estimators": "ref_lasso, ridge",
        }
    )
    outcome = run(config, tmp_path)
    assert [path.name for path in outcome.paths] == ["amp_ref_lasso_00.csv", "amp_ref_lasso_01.csv"]
    provenance, rows = _read(outcome.paths[1])
    assert "lambda=2" in provenance
    assert len(rows) == 6
    assert rows[0]["tau2_se"] != ""


def test_correlation_figure(tmp_path):
    config = ExperimentConfig(mode=Mode.FIGURE, figure="correlation-vs-noise")
    outcome = run(config, tmp_path)
    _, rows = _read(outcome.paths[0])
    assert outcome.paths[0].name == "figure_correlation-vs-noise.csv"
    assert list(rows[0]) == list(CORRELATION_COLUMNS)
    assert len(rows) == 150
    assert outcome.failures == 0
