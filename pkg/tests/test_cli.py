import pytest

from refpanel.cli import build_parser, main


@pytest.fixture(autouse=True)
def quiet_environment(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("RUNNING_IN_PRODUCTION", "true")
    monkeypatch.delenv("OPENTELEMETRY_PLATFORM", raising=False)


def _config(tmp_path, text):
    path = tmp_path / "experiment.env"
    path.write_text(text)
    return str(path)


SWEEP = """
gamma_x = 0.5
gamma_w = 0.5
h2_x = 0.6
prior.kappa = 0.05
estimators = ridge, ref_ridge
lambda_grid = 0.1, 1, 10
"""


def test_theory_sweep(tmp_path):
    out = tmp_path / "results"
    assert main(["theory-sweep", "--config", _config(tmp_path, SWEEP), "--out", str(out)]) == 0
    text = (out / "theory_sweep.csv").read_text()
    assert text.startswith("# config_hash=")
    assert len(text.splitlines()) == 2 + 6


def test_seed_override_changes_provenance(tmp_path):
    config = _config(tmp_path, SWEEP)
    main(["theory-sweep", "--config", config, "--out", "a"])
    main(["theory-sweep", "--config", config, "--out", "b", "--seed", "0x10"])
    first = (tmp_path / "a" / "theory_sweep.csv").read_text().splitlines()
    second = (tmp_path / "b" / "theory_sweep.csv").read_text().splitlines()
    assert "seed=16" in second[0]
    assert first[1:] == second[1:]


def test_missing_config_file(tmp_path):
    assert main(["theory-sweep", "--config", str(tmp_path / "absent.env")]) == 2


def test_empty_lambda_grid_is_a_config_error(tmp_path):
    text = SWEEP.replace("lambda_grid = 0.1, 1, 10", "")
    assert main(["simulate", "--config", _config(tmp_path, text)]) == 2


def test_bad_heritability_is_a_config_error(tmp_path):
    assert main(["theory-sweep", "--config", _config(tmp_path, SWEEP.replace("0.6", "1.6"))]) == 2


def test_seed_must_fit_in_64_bits():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["simulate", "--config", "x", "--seed", str(2**64)])


def test_mode_is_required():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
