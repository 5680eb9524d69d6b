import numpy as np
import pytest

from refpanel.covariance import CovarianceModel
from refpanel.errors import OutOfRange
from refpanel.moments import soft_threshold
from refpanel.prox import ProxProblem, div_eta, prox_objective, prox_sigma, prox_sigma_batch


@pytest.fixture
def v():
    return np.random.default_rng(11).standard_normal(30)


def test_identity_is_soft_threshold(v):
    solution = prox_sigma(ProxProblem(CovarianceModel.identity(), v, 0.7))
    np.testing.assert_array_equal(solution.w, soft_threshold(v, 0.7))
    assert div_eta(solution) == np.count_nonzero(np.abs(v) > 0.7)


def test_diagonal_scales_the_threshold(v):
    eigs = np.linspace(0.5, 2.0, v.size)
    solution = prox_sigma(ProxProblem(CovarianceModel.spectrum(eigs), v, 0.7))
    np.testing.assert_allclose(solution.w, soft_threshold(v, 0.7 / eigs))


def test_zero_threshold_returns_input(v):
    w, sweeps = prox_sigma_batch(CovarianceModel.ar1(v.size, 0.5), v, 0.0)
    np.testing.assert_array_equal(w[0], v)
    assert sweeps == 0


def test_negative_threshold_is_rejected(v):
    with pytest.raises(OutOfRange):
        ProxProblem(CovarianceModel.identity(), v, -0.1)


def test_dense_solution_satisfies_kkt_and_is_optimal(v):
    sigma = CovarianceModel.ar1(v.size, 0.6)
    solution = prox_sigma(ProxProblem(sigma, v, 0.4))
    assert solution.kkt_residual < 1e-8
    best = prox_objective(sigma, v, 0.4, solution.w)
    rng = np.random.default_rng(2)
    for _ in range(20):
        assert best <= prox_objective(sigma, v, 0.4, solution.w + 1e-3 * rng.standard_normal(v.size))


def test_warm_start_reaches_the_same_solution(v):
    sigma = CovarianceModel.ar1(v.size, 0.6)
    cold = prox_sigma(ProxProblem(sigma, v, 0.4))
    warm = prox_sigma(ProxProblem(sigma, v, 0.4), warm_start=cold.w)
    np.testing.assert_allclose(warm.w, cold.w, atol=1e-9)
    assert warm.sweeps <= cold.sweeps


def test_batch_rows_are_independent():
    sigma = CovarianceModel.ar1(12, 0.3)
    v = np.random.default_rng(5).standard_normal((4, 12))
    batch, _ = prox_sigma_batch(sigma, v, 0.5)
    for row, w in zip(v, batch):
        np.testing.assert_allclose(prox_sigma(ProxProblem(sigma, row, 0.5)).w, w, atol=1e-9)


def test_dense_dimension_limit():
    with pytest.raises(OutOfRange):
        prox_sigma_batch(CovarianceModel.ar1(20, 0.3), np.ones(20), 0.1, max_dimension=10)


@pytest.mark.parametrize(("rho", "seed"), [(0.3, 21), (0.6, 22)])
def test_divergence_matches_finite_differences(rho, seed):
    p, theta, step, directions = 200, 0.5, 1e-5, 8
    sigma = CovarianceModel.ar1(p, rho)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(p)
    solution = prox_sigma(ProxProblem(sigma, v, theta))
    u = rng.choice([-1.0, 1.0], size=(directions, p))
    start = np.tile(solution.w, (directions, 1))
    plus, _ = prox_sigma_batch(sigma, v + step * u, theta, warm_start=start)
    minus, _ = prox_sigma_batch(sigma, v - step * u, theta, warm_start=start)
    for row in np.vstack([plus, minus]):
        np.testing.assert_array_equal(np.flatnonzero(row), solution.active_set)
    estimate = np.mean(np.sum(u * (plus - minus), axis=1)) / (2 * step)
    assert estimate == pytest.approx(div_eta(solution), rel=0.1)
