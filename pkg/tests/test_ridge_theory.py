import itertools

import numpy as np
import pytest

from refpanel.covariance import CovarianceModel
from refpanel.errors import OutOfRange
from refpanel.lasso_theory import best_lambda
from refpanel.results import Estimator, Objective
from refpanel.ridge_theory import (
    ref_ridge_c_star_iid,
    ref_ridge_r2_from_fixed_point,
    ref_ridge_r2_limit,
    ref_ridge_risk_general,
    ref_ridge_risk_iid,
    ridge_mse_closed_form,
    ridge_optimal_lambda,
    ridge_optimal_r2,
    ridge_ordering_check,
    ridge_r2_closed_form,
    ridge_risk_general,
    ridge_risk_iid,
    rmt_equivalence_gap,
    solve_ref_ridge_se_general,
)


@pytest.mark.parametrize(
    ("lam", "gamma_w"), list(itertools.product([0.1, 0.5, 1.0, 2.0, 5.0, 10.0], [0.2, 0.5, 1.0, 1.5, 2.0]))
)
def test_amp_and_random_matrix_penalties_agree(lam, gamma_w):
    assert rmt_equivalence_gap(lam, gamma_w) < 1e-10


def test_gap_rejects_tiny_lambda():
    with pytest.raises(OutOfRange):
        rmt_equivalence_gap(1e-9, 0.5)


def test_c_star_solves_its_quadratic():
    lam, gamma_w = 0.7, 1.3
    c = ref_ridge_c_star_iid(lam, gamma_w)
    assert c == pytest.approx((1.0 + c) * gamma_w / (1.0 + lam * (1.0 + c)), rel=1e-12)


@pytest.mark.parametrize("lam", [0.05, 0.5, 2.0, 20.0])
def test_ridge_closed_forms_match_state_evolution(iid_spec, lam):
    report = ridge_risk_iid(iid_spec, lam)
    assert ridge_mse_closed_form(iid_spec, lam) == pytest.approx(report.mse, rel=1e-10)
    assert ridge_r2_closed_form(iid_spec, lam) == pytest.approx(report.r2, rel=1e-10)


@pytest.mark.parametrize(("gamma", "h2"), list(itertools.product([0.25, 0.5, 1.0], [0.3, 0.6, 0.9])))
def test_ridge_optimal_penalty(iid_spec, gamma, h2):
    spec = iid_spec.replace(gamma_x=gamma, gamma_w=gamma, gamma_s=gamma, h2_x=h2, h2_s=h2)
    lam, report = best_lambda(spec, Estimator.RIDGE, Objective.MAX_R2, np.geomspace(1e-2, 1e2, 400))
    assert lam == pytest.approx(ridge_optimal_lambda(spec), rel=1e-3)
    assert report.r2 == pytest.approx(ridge_optimal_r2(spec), rel=1e-7)
    assert ridge_risk_iid(spec, ridge_optimal_lambda(spec)).r2 == pytest.approx(ridge_optimal_r2(spec), rel=1e-12)


def test_ref_ridge_r2_increases_towards_its_limit(iid_spec):
    r2 = [ref_ridge_risk_iid(iid_spec, lam).r2 for lam in np.geomspace(0.01, 1e4, 40)]
    assert np.all(np.diff(r2) >= -1e-14)
    limit = ref_ridge_r2_limit(iid_spec)
    assert limit == pytest.approx(0.6**2 / (0.6 + 0.5))
    assert ref_ridge_risk_iid(iid_spec, 1e6).r2 == pytest.approx(limit, abs=1e-6)


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_ref_ridge_r2_from_fixed_point(iid_spec, lam):
    closed_form = ref_ridge_risk_iid(iid_spec, lam).r2
    assert ref_ridge_r2_from_fixed_point(iid_spec, lam) == pytest.approx(closed_form, rel=1e-10)


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_flat_spectrum_matches_identity(iid_spec, lam):
    flat = iid_spec.replace(covariance=CovarianceModel.spectrum([1.0, 1.0]))
    fp = solve_ref_ridge_se_general(flat, lam)
    assert fp.c_star == pytest.approx(ref_ridge_c_star_iid(lam, iid_spec.gamma_w), rel=1e-10)
    general = ref_ridge_risk_general(flat, lam, fp)
    iid = ref_ridge_risk_iid(iid_spec, lam)
    assert general.mse == pytest.approx(iid.mse, rel=1e-9)
    assert general.r2 == pytest.approx(iid.r2, rel=1e-9)
    assert ridge_risk_general(flat, lam).mse == pytest.approx(ridge_risk_iid(iid_spec, lam).mse, rel=1e-9)
    assert ridge_risk_general(flat, lam).r2 == pytest.approx(ridge_risk_iid(iid_spec, lam).r2, rel=1e-9)


def test_general_spectrum_risk_is_bounded(iid_spec):
    spec = iid_spec.replace(covariance=CovarianceModel.spectrum(np.linspace(0.2, 3.0, 50)))
    for lam in (0.1, 1.0, 10.0):
        report = ref_ridge_risk_general(spec, lam, solve_ref_ridge_se_general(spec, lam))
        assert report.mse >= 0
        assert 0 <= report.r2 <= spec.h2_s


def test_reference_panel_ridge_never_beats_ridge(iid_spec):
    report = ridge_ordering_check(iid_spec, np.geomspace(0.01, 100.0, 41))
    assert report.max_r2_gap < 0
    assert report.min_mse_gap > 0
