"""Limiting risks of ridge and reference-panel ridge.

Both estimators act on the effective observation u * beta + rho * Sigma^{-1/2} z through the resolvent
R = Sigma (Sigma + theta)^{-1} with theta = lambda * u, so every expectation reduces to a spectral sum.
"""

import logging
import math
from collections.abc import Sequence

import numpy as np
from scipy.optimize import brentq

from refpanel.errors import InfeasibleRegime, NonPositiveRho, OutOfRange
from refpanel.lasso_theory import OrderingReport, ordering_check
from refpanel.moments import DEFAULT_OPTIONS, SolverOptions
from refpanel.results import Estimator, RidgeFixedPoint, RiskReport
from refpanel.spec import ProblemSpec, noise_variance

logger = logging.getLogger(__name__)

MIN_LAMBDA = 1e-8
R2_SLACK = 1e-10


def _check_lambda(lam: float):
    if not (lam >= MIN_LAMBDA and math.isfinite(lam)):
        raise OutOfRange(f"ridge lambda must be at least {MIN_LAMBDA}, got {lam}")


def _discriminant(lam: float, gamma: float) -> float:
    return (1.0 - lam - gamma) ** 2 + 4.0 * lam


def resolvent_shrinkage(lam: float, gamma: float) -> float:
    """2 / (1 + lambda + gamma + sqrt((1 - lambda - gamma)^2 + 4 lambda))."""
    return 2.0 / (1.0 + lam + gamma + math.sqrt(_discriminant(lam, gamma)))


def ref_ridge_c_star_iid(lam: float, gamma_w: float) -> float:
    """Closed-form c* for Sigma = I."""
    _check_lambda(lam)
    return (-(1.0 + lam - gamma_w) + math.sqrt(_discriminant(lam, gamma_w))) / (2.0 * lam)


def _report(spec, estimator, lam, mse, r2, fp) -> RiskReport:
    if r2 > spec.h2_s + R2_SLACK:
        raise InfeasibleRegime(f"{estimator.value}: R^2 {r2:.12g} exceeds test heritability {spec.h2_s}")
    return RiskReport(lam=lam, mse=max(mse, 0.0), r2=min(max(r2, 0.0), spec.h2_s), fixed_point=fp, estimator=estimator)


def ref_ridge_rho2_iid(spec: ProblemSpec, lam: float) -> tuple[float, float]:
    """(rho*^2, c*) for Sigma = I through the state-evolution route."""
    c = ref_ridge_c_star_iid(lam, spec.gamma_w)
    u = 1.0 + c
    shrink = resolvent_shrinkage(lam, spec.gamma_w)
    denom = 1.0 - spec.gamma_w * shrink**2
    if denom <= 0:
        raise NonPositiveRho(f"1 - gamma_w R^2 = {denom:.3g} is not positive")
    rho2 = u * u * spec.m2 * (spec.gamma_w * shrink**2 + spec.gamma_x / spec.h2_x) / denom
    return rho2, c


def ref_ridge_risk_iid(spec: ProblemSpec, lam: float) -> RiskReport:
    _check_lambda(lam)
    rho2, c = ref_ridge_rho2_iid(spec, lam)
    u = 1.0 + c
    shrink = resolvent_shrinkage(lam, spec.gamma_w)
    m2 = spec.m2
    mse = rho2 * shrink**2 + (u * shrink - 1.0) ** 2 * m2
    r2 = spec.h2_s * spec.h2_x * (1.0 - spec.gamma_w * shrink**2) / (spec.h2_x + spec.gamma_x)
    fp = RidgeFixedPoint(rho_star=math.sqrt(rho2), c_star=c, lam=lam)
    return _report(spec, Estimator.REF_RIDGE, lam, mse, r2, fp)


def ref_ridge_r2_from_fixed_point(spec: ProblemSpec, lam: float) -> float:
    """The same R^2 computed from (rho*, c*) instead of the closed form."""
    rho2, c = ref_ridge_rho2_iid(spec, lam)
    u2m2 = (1.0 + c) ** 2 * spec.m2
    return spec.h2_s * u2m2 / (rho2 + u2m2)


def ref_ridge_r2_limit(spec: ProblemSpec) -> float:
    """sup over lambda of the reference-panel ridge R^2, reached as lambda -> infinity."""
    return spec.h2_s * spec.h2_x / (spec.h2_x + spec.gamma_x)


def _plain_u(lam: float, gamma_x: float) -> float:
    """Positive root of lambda u^2 + (1 - gamma_x - lambda) u - 1 = 0, with u = 1 + b."""
    b = 1.0 - gamma_x - lam
    return (-b + math.sqrt(b * b + 4.0 * lam)) / (2.0 * lam)


def ridge_risk_iid(spec: ProblemSpec, lam: float) -> RiskReport:
    _check_lambda(lam)
    sigma2 = noise_variance(spec, "x")
    m2 = spec.m2
    u = _plain_u(lam, spec.gamma_x)
    shrink = 1.0 / (1.0 + lam * u)
    denom = 1.0 - spec.gamma_x * shrink**2
    mse = (spec.gamma_x * sigma2 * shrink**2 + (1.0 - shrink) ** 2 * m2) / denom
    tau2 = spec.gamma_x * (sigma2 + mse)
    r2 = spec.h2_s * m2 / (m2 + tau2)
    fp = RidgeFixedPoint(rho_star=math.sqrt(tau2), c_star=u - 1.0, lam=lam)
    return _report(spec, Estimator.RIDGE, lam, mse, r2, fp)


def ridge_mse_closed_form(spec: ProblemSpec, lam: float) -> float:
    """Ridge MSE written directly in lambda and gamma_x."""
    _check_lambda(lam)
    g = spec.gamma_x
    root = math.sqrt((1.0 - g - lam) ** 2 + 4.0 * lam)
    bias = ((g + 1.0) * lam + (g - 1.0) ** 2 + (g - 1.0) * root) / (2.0 * g * root)
    variance = (1.0 + g + lam - root) / (2.0 * root)
    return spec.m2 * bias + spec.m2 * (1.0 - spec.h2_x) / spec.h2_x * variance


def ridge_r2_closed_form(spec: ProblemSpec, lam: float) -> float:
    """Ridge R^2 with the correction constant c = 4 gamma_x / (1 + lambda + gamma_x + sqrt(D)); needs h2_x = h2_s."""
    g, h2 = spec.gamma_x, spec.h2_s
    q = resolvent_shrinkage(lam, g) / 2.0
    c = 4.0 * g * q
    return h2 * h2 / ((1.0 - c) * h2 + g) * (1.0 - 4.0 * g * q * q)


def ridge_optimal_lambda(spec: ProblemSpec) -> float:
    return spec.gamma_x * (1.0 - spec.h2_x) / spec.h2_x


def ridge_optimal_r2(spec: ProblemSpec) -> float:
    """Ridge R^2 at lambda* = gamma_x (1 - h^2) / h^2, in terms of h2_x and gamma_x only (h2_x = h2_s)."""
    g, h2 = spec.gamma_x, spec.h2_x
    m = math.sqrt(g * g / (h2 * h2) + (2.0 / h2 - 4.0) * g + 1.0)
    q = h2 / (h2 * (m + 1.0) + g)
    return h2 * h2 / ((1.0 - 4.0 * g * q) * h2 + g) * (1.0 - 4.0 * g * q * q)


def rmt_equivalence_gap(lam: float, gamma_w: float) -> float:
    """|1/(1 - b'_w) - (1 - gamma_w R^2)|: the AMP and random-matrix forms of the panel penalty must agree."""
    _check_lambda(lam)
    if not gamma_w > 0:
        raise OutOfRange(f"gamma_w must be positive, got {gamma_w}")
    d = _discriminant(lam, gamma_w)
    b_w = (-(-1.0 + lam + gamma_w) + math.sqrt(d)) / 2.0
    b_w_prime = -gamma_w * b_w / (gamma_w * lam + (b_w + lam) ** 2)
    amp_form = 1.0 / (1.0 - b_w_prime)
    rmt_form = 1.0 - 4.0 * gamma_w / (1.0 + lam + gamma_w + math.sqrt(d)) ** 2
    return abs(amp_form - rmt_form)


def _spectrum(spec: ProblemSpec) -> np.ndarray:
    cov = spec.covariance
    if cov.is_identity:
        return np.ones(1)
    return cov.spectrum_at()


def _c_equation(c: float, s: np.ndarray, lam: float, gamma_w: float) -> float:
    theta = lam * (1.0 + c)
    return (1.0 + c) * gamma_w * float(np.mean(s / (s + theta))) - c


def solve_ref_ridge_se_general(spec: ProblemSpec, lam: float) -> RidgeFixedPoint:
    """(rho*, c*) from the spectrum of Sigma: c* by Brent on its rho-free equation, rho*^2 from the affine one."""
    _check_lambda(lam)
    s = _spectrum(spec)
    hi = 1.0
    while _c_equation(hi, s, lam, spec.gamma_w) > 0:
        hi *= 2.0
        if hi > 2.0**60:
            raise InfeasibleRegime(f"could not bracket c* for lambda={lam:.6g}")
    c = brentq(_c_equation, 0.0, hi, args=(s, lam, spec.gamma_w), xtol=1e-15, rtol=1e-15)
    residual = abs(_c_equation(c, s, lam, spec.gamma_w))
    u = 1.0 + c
    theta = lam * u
    r = s / (s + theta)
    a = float(np.mean(r * r))
    q = spec.m2 * float(np.mean(s * r * r))
    denom = 1.0 - spec.gamma_w * a
    if denom <= 0:
        raise NonPositiveRho(f"1 - gamma_w * a = {denom:.3g} is not positive at lambda={lam:.6g}")
    rho2 = (spec.gamma_w * u * u * q + spec.gamma_x * u * u * spec.m2 * float(np.mean(s)) / spec.h2_x) / denom
    return RidgeFixedPoint(rho_star=math.sqrt(rho2), c_star=c, lam=lam, residual=residual)


def ref_ridge_risk_general(spec: ProblemSpec, lam: float, fp: RidgeFixedPoint) -> RiskReport:
    s = _spectrum(spec)
    u = 1.0 + fp.c_star
    r = s / (s + lam * u)
    rho2 = fp.rho_star**2
    m2 = spec.m2
    a = float(np.mean(r * r))
    q = m2 * float(np.mean(s * r * r))
    mse = rho2 * a + m2 * float(np.mean(s * (u * r - 1.0) ** 2))
    cross = u * m2 * float(np.mean(s * r))
    r2 = spec.h2_s * cross**2 / (m2 * float(np.mean(s)) * (rho2 * a + u * u * q))
    return _report(spec, Estimator.REF_RIDGE, lam, mse, r2, fp)


def ridge_risk_general(spec: ProblemSpec, lam: float) -> RiskReport:
    """Traditional ridge under a general spectrum: same resolvent, with gamma_x and the training noise."""
    _check_lambda(lam)
    s = _spectrum(spec)
    m2 = spec.m2
    sigma2 = noise_variance(spec, "x")
    g = spec.gamma_x

    def equation(c):
        return (1.0 + c) * g * float(np.mean(s / (s + lam * (1.0 + c)))) - c

    hi = 1.0
    while equation(hi) > 0:
        hi *= 2.0
    c = brentq(equation, 0.0, hi, xtol=1e-15, rtol=1e-15)
    u = 1.0 + c
    r = s / (s + lam * u)
    denom = 1.0 - g * float(np.mean(r * r))
    if denom <= 0:
        raise NonPositiveRho(f"1 - gamma_x * a = {denom:.3g} is not positive at lambda={lam:.6g}")
    # tau^2 = gamma_x (sigma^2 + E||R(beta + tau Sigma^{-1/2} z) - beta||_Sigma^2 / p)
    tau2 = g * (sigma2 + m2 * float(np.mean(s * (r - 1.0) ** 2))) / denom
    mse = tau2 * float(np.mean(r * r)) + m2 * float(np.mean(s * (r - 1.0) ** 2))
    cross = m2 * float(np.mean(s * r))
    est_norm2 = tau2 * float(np.mean(r * r)) + m2 * float(np.mean(s * r * r))
    r2 = spec.h2_s * cross**2 / (m2 * float(np.mean(s)) * est_norm2)
    fp = RidgeFixedPoint(rho_star=math.sqrt(tau2), c_star=c, lam=lam, residual=abs(equation(c)))
    return _report(spec, Estimator.RIDGE, lam, mse, r2, fp)


def ridge_ordering_check(
    spec: ProblemSpec, grid: Sequence[float], opts: SolverOptions = DEFAULT_OPTIONS
) -> OrderingReport:
    """Numeric comparison of ridge and reference-panel ridge at their own optimal penalties."""
    return ordering_check(spec, Estimator.REF_RIDGE, Estimator.RIDGE, grid, opts)
