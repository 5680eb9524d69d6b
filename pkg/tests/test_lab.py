import dataclasses

import numpy as np
import pytest
import scipy.linalg

from refpanel.errors import DimensionTooSmall, OutOfRange, SingularSystem
from refpanel.lab import (
    evaluate,
    fit,
    fit_lasso,
    fit_ref_lasso,
    fit_ref_ridge,
    fit_ridge,
    generate,
    monte_carlo,
    monte_carlo_sweep,
    replicate_seeds,
    sample_sizes,
)
from refpanel.lasso_theory import best_lambda, theory_risk
from refpanel.priors import SignalPrior
from refpanel.prox import kkt_residual
from refpanel.results import Estimator, Objective
from refpanel.spec import ProblemSpec


def test_generate_is_deterministic(iid_spec):
    first, second = generate(iid_spec, 100, seed=3), generate(iid_spec, 100, seed=3)
    for name in ("X", "W", "S", "y_x", "y_s", "beta0"):
        np.testing.assert_array_equal(getattr(first, name), getattr(second, name))
    assert not np.array_equal(first.X, generate(iid_spec, 100, seed=4).X)


def test_generate_shapes(wide_spec):
    dataset = generate(wide_spec, 120, seed=0)
    assert sample_sizes(wide_spec, 120) == (240, 60, 240)
    assert dataset.X.shape == (240, 120)
    assert dataset.W.shape == (60, 120)
    assert dataset.S.shape == (240, 120)
    assert dataset.y_x.shape == (240,)


def test_generate_rejects_small_dimensions(iid_spec):
    with pytest.raises(DimensionTooSmall):
        generate(iid_spec, 40, seed=0)
    with pytest.raises(DimensionTooSmall):
        generate(iid_spec.replace(gamma_w=20.0), 100, seed=0)


def test_ref_lasso_satisfies_kkt(small_dataset):
    lam = 0.5
    beta = fit_ref_lasso(small_dataset, lam)
    grad = small_dataset.wtw @ beta - small_dataset.xty
    assert kkt_residual(grad, beta, lam / np.sqrt(small_dataset.p)) < 1e-7
    assert 0 < np.count_nonzero(beta) < small_dataset.p


def test_large_penalty_gives_zero(small_dataset):
    lam = 2.0 * np.sqrt(small_dataset.p) * np.max(np.abs(small_dataset.xty))
    assert not np.any(fit_ref_lasso(small_dataset, lam))
    assert not np.any(fit_lasso(small_dataset, lam))


def test_panel_equal_to_training_sample_gives_the_lasso(small_dataset):
    same = dataclasses.replace(small_dataset, W=small_dataset.X)
    np.testing.assert_allclose(fit_ref_lasso(same, 0.3), fit_lasso(small_dataset, 0.3), atol=1e-8)


def test_ridge_solves_normal_equations(small_dataset):
    lam = 0.4
    beta = fit_ref_ridge(small_dataset, lam)
    np.testing.assert_allclose(small_dataset.wtw @ beta + lam * beta, small_dataset.xty, atol=1e-10)
    beta = fit_ridge(small_dataset, lam)
    np.testing.assert_allclose(small_dataset.xtx @ beta + lam * beta, small_dataset.xty, atol=1e-10)


def test_unpenalised_ref_ridge(small_dataset):
    expected = scipy.linalg.solve(small_dataset.wtw, small_dataset.xty)
    np.testing.assert_allclose(fit_ref_ridge(small_dataset, 0.0), expected, rtol=1e-6, atol=1e-10)


def test_unpenalised_ridge_needs_enough_panel_rows(wide_spec):
    dataset = generate(wide_spec, 100, seed=1)
    with pytest.raises(SingularSystem):
        fit_ref_ridge(dataset, 0.0)


def test_evaluate_truth(small_dataset):
    mse, r2 = evaluate(small_dataset, small_dataset.beta0)
    assert mse == 0.0
    assert 0 < r2 <= 1
    mse, r2 = evaluate(small_dataset, np.zeros(small_dataset.p))
    assert mse == pytest.approx(float(small_dataset.beta0 @ small_dataset.beta0))
    assert r2 == 0.0


def test_evaluate_checks_shape(small_dataset):
    with pytest.raises(OutOfRange):
        evaluate(small_dataset, np.zeros(small_dataset.p + 1))


def test_replicate_seeds_are_distinct():
    seeds = replicate_seeds(0, 50)
    assert len(set(seeds)) == 50
    assert seeds == replicate_seeds(0, 50)


def test_monte_carlo_is_reproducible_across_jobs(iid_spec):
    serial = monte_carlo(iid_spec, 100, 1.0, Estimator.REF_RIDGE, reps=4, seed=9)
    threaded = monte_carlo(iid_spec, 100, 1.0, Estimator.REF_RIDGE, reps=4, seed=9, jobs=2)
    np.testing.assert_array_equal(serial.mse_values, threaded.mse_values)
    assert serial.reps == 4
    assert serial.mse_se > 0


def test_monte_carlo_needs_two_replicates(iid_spec):
    with pytest.raises(OutOfRange):
        monte_carlo(iid_spec, 100, 1.0, Estimator.RIDGE, reps=1, seed=0)


def test_sweep_matches_single_points(iid_spec):
    lams = [0.2, 1.0, 5.0]
    sweep = monte_carlo_sweep(iid_spec, 100, lams, Estimator.RIDGE, reps=3, seed=1)
    for lam, risk in zip(lams, sweep):
        single = monte_carlo(iid_spec, 100, lam, Estimator.RIDGE, reps=3, seed=1)
        np.testing.assert_allclose(risk.mse_values, single.mse_values)


@pytest.mark.slow
def test_ref_lasso_simulation_matches_theory(iid_spec):
    lam, theory = best_lambda(iid_spec, Estimator.REF_LASSO, Objective.MIN_MSE, np.geomspace(0.1, 10.0, 15))
    risk = monte_carlo(iid_spec, 2000, lam, Estimator.REF_LASSO, reps=20, seed=2024, jobs=4)
    assert risk.mse == pytest.approx(theory.mse, rel=0.05)
    assert theory_risk(iid_spec, Estimator.REF_LASSO, lam).mse == pytest.approx(theory.mse)


@pytest.mark.slow
def test_ref_ridge_simulation_matches_theory(iid_spec):
    risk = monte_carlo(iid_spec, 1000, 1.0, Estimator.REF_RIDGE, reps=20, seed=7)
    theory = theory_risk(iid_spec, Estimator.REF_RIDGE, 1.0)
    assert risk.mse == pytest.approx(theory.mse, rel=0.05)
    assert risk.r2 == pytest.approx(theory.r2, abs=0.03)


@pytest.fixture(scope="module")
def theory_gaps():
    """Mean |relative MSE gap| to theory per estimator, at p = 1000 and p = 4000 on shared datasets."""
    spec = ProblemSpec(
        gamma_x=0.5, gamma_w=0.5, gamma_s=0.5, h2_x=0.6, h2_s=0.6, prior=SignalPrior.bernoulli_gaussian(0.05)
    )
    lam = 1.0
    theory = {est: theory_risk(spec, est, lam).mse for est in Estimator}
    gaps = {}
    for p in (1000, 4000):
        per_estimator = {est: [] for est in Estimator}
        for seed in replicate_seeds(31, 10):
            dataset = generate(spec, p, seed)
            for est in Estimator:
                mse, _ = evaluate(dataset, fit(dataset, est, lam))
                per_estimator[est].append(abs(mse - theory[est]) / theory[est])
        gaps[p] = {est: float(np.mean(values)) for est, values in per_estimator.items()}
    return gaps


@pytest.mark.slow
@pytest.mark.parametrize("estimator", list(Estimator))
def test_simulation_gap_shrinks_with_dimension(theory_gaps, estimator):
    assert theory_gaps[4000][estimator] <= theory_gaps[1000][estimator]
