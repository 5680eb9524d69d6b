import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from refpanel.covariance import CovarianceModel
from refpanel.errors import AlphaBelowMin, OutOfRange
from refpanel.general_l1 import (
    alpha_min,
    calibrate_alpha,
    general_l1_at_alpha,
    general_l1_risk,
    lambda_of_alpha,
    monte_carlo_sample,
    solve_general_l1_se,
)
from refpanel.lasso_theory import ref_alpha_min, ref_lasso_risk, solve_ref_lasso_se
from refpanel.results import Estimator


def test_sample_needs_replicates(flat_spectrum_spec):
    with pytest.raises(OutOfRange):
        monte_carlo_sample(flat_spectrum_spec, p_mc=100, reps=1)


def test_sample_is_deterministic(flat_spectrum_spec):
    first = monte_carlo_sample(flat_spectrum_spec, p_mc=50, reps=4, seed=3)
    second = monte_carlo_sample(flat_spectrum_spec, p_mc=50, reps=4, seed=3)
    np.testing.assert_array_equal(first.noise, second.noise)
    np.testing.assert_array_equal(first.beta, second.beta)


def test_dense_covariance_fixes_the_dimension(iid_spec):
    spec = iid_spec.replace(covariance=CovarianceModel.ar1(30, 0.2))
    assert monte_carlo_sample(spec, p_mc=400, reps=2).p == 30


@pytest.mark.parametrize("lam", [0.3, 1.5])
def test_flat_spectrum_matches_the_scalar_theory(iid_spec, flat_spectrum_spec, lam):
    scalar = solve_ref_lasso_se(iid_spec, lam)
    general = solve_general_l1_se(flat_spectrum_spec, lam, p_mc=400, reps=100, seed=1)
    assert general.residual < 1e-8
    assert general.zeta_star == pytest.approx(scalar.zeta_star, rel=0.05)
    assert general.b_star == pytest.approx(scalar.b_star, rel=0.05, abs=1e-3)
    assert general.tau_star * general.zeta_star == pytest.approx(1.0 + general.b_star)
    assert math.isfinite(general.tau2_se) and general.tau2_se > 0

    risk = general_l1_risk(flat_spectrum_spec, lam, general, p_mc=400, reps=100, seed=1)
    exact = ref_lasso_risk(iid_spec, lam, scalar)
    assert risk.mse == pytest.approx(exact.mse, rel=0.05)
    assert risk.r2 == pytest.approx(exact.r2, abs=0.03)
    assert risk.estimator is Estimator.REF_LASSO
    assert risk.mse_se > 0 and risk.r2_se > 0


def test_alpha_round_trip_on_a_shared_sample(flat_spectrum_spec):
    sample = monte_carlo_sample(flat_spectrum_spec, p_mc=200, reps=20, seed=5)
    alpha = calibrate_alpha(flat_spectrum_spec, 0.8, sample=sample)
    assert lambda_of_alpha(flat_spectrum_spec, alpha, sample=sample) == pytest.approx(0.8, rel=1e-6)
    fp = general_l1_at_alpha(flat_spectrum_spec, alpha, sample=sample)
    assert fp.alpha * fp.tau_star / (1.0 + fp.b_star) == pytest.approx(0.8, rel=1e-6)


def test_alpha_min_tracks_the_scalar_value(wide_spec):
    spec = wide_spec.replace(covariance=CovarianceModel.spectrum(np.ones(4)))
    sample = monte_carlo_sample(spec, p_mc=400, reps=50, seed=2)
    amin = alpha_min(spec, sample=sample)
    assert amin == pytest.approx(ref_alpha_min(wide_spec), rel=0.05)
    with pytest.raises(AlphaBelowMin):
        general_l1_at_alpha(spec, 0.5 * amin, sample=sample)


def test_alpha_min_is_zero_for_tall_panels(flat_spectrum_spec):
    assert alpha_min(flat_spectrum_spec) == 0.0


@pytest.mark.slow
def test_correlated_predictors(iid_spec):
    spec = iid_spec.replace(covariance=CovarianceModel.ar1(60, 0.4))
    fp = solve_general_l1_se(spec, 1.0, p_mc=60, reps=40)
    assert fp.p_mc == 60
    assert fp.tau_star > 0 and fp.b_star >= 0
    risk = general_l1_risk(spec, 1.0, fp, p_mc=60, reps=40)
    assert 0 <= risk.r2 <= spec.h2_s


def test_shared_sample_gives_consistent_results_across_threads(flat_spectrum_spec):
    shared = monte_carlo_sample(flat_spectrum_spec, p_mc=100, reps=8, seed=6)
    fresh = monte_carlo_sample(flat_spectrum_spec, p_mc=100, reps=8, seed=6)
    points = [(zeta, alpha) for zeta in (1.0, 2.0, 3.0) for alpha in (0.5, 1.0, 2.0)] * 4

    def run(point):
        eta, active = shared.prox(*point)
        return eta.copy(), active.copy()

    with ThreadPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(run, points))
    for point, (eta, active) in zip(points, results):
        expected_eta, expected_active = fresh.prox(*point)
        np.testing.assert_allclose(eta, expected_eta, atol=1e-12)
        np.testing.assert_array_equal(active, expected_active)


def test_lambda_grows_like_alpha_times_the_noiseless_tau(flat_spectrum_spec):
    spec = flat_spectrum_spec
    sample = monte_carlo_sample(spec, p_mc=400, reps=50, seed=4)
    tau_inf = math.sqrt(spec.gamma_x * sample.signal_norm2 / spec.h2_x)
    lam_12 = lambda_of_alpha(spec, 12.0, sample=sample)
    lam_24 = lambda_of_alpha(spec, 24.0, sample=sample)
    assert lam_12 / 12.0 == pytest.approx(tau_inf, rel=0.05)
    assert (lam_24 - lam_12) / 12.0 == pytest.approx(tau_inf, rel=0.05)


@pytest.mark.slow
def test_monte_carlo_error_shrinks_with_replicates(flat_spectrum_spec):
    def mean_se(reps):
        fits = [solve_general_l1_se(flat_spectrum_spec, 1.0, p_mc=200, reps=reps, seed=s) for s in range(10)]
        return np.mean([fp.tau2_se for fp in fits])

    assert 1.2 <= mean_se(20) / mean_se(80) <= 3.5
