"""State-evolution fixed points and limiting risks of the lasso and the reference-panel lasso when Sigma = I.

Units follow the rescaled coefficients beta-bar (entries of order one). With zeta = (1 + b) / tau the
reference-panel lasso behaves like tau * eta(zeta * beta + z, lambda * zeta), and the traditional lasso like
eta(beta + tau * z, alpha * tau).
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from refpanel.errors import AlphaBelowMin, InfeasibleRegime, NoConvergence, OutOfRange, PreconditionError
from refpanel.moments import DEFAULT_OPTIONS, SolverOptions, ThresholdMoments, gaussian_eta_sq, moments_for
from refpanel.priors import SignalPrior
from refpanel.results import Estimator, Objective, RiskReport, ScalarSEFixedPoint
from refpanel.spec import ProblemSpec, noise_variance

logger = logging.getLogger(__name__)

BRACKET_CAP = 2.0**60
SCAN_POINTS = 65
TIE_TOLERANCE = 1e-12
R2_SLACK = 1e-10


def _require_identity(spec: ProblemSpec):
    if not spec.covariance.is_identity:
        raise PreconditionError("scalar lasso theory needs an identity covariance; use general_l1 instead")


def _require_positive(name: str, value: float):
    if not (value > 0 and math.isfinite(value)):
        raise OutOfRange(f"{name} must be positive and finite, got {value}")


def zeta_map(spec: ProblemSpec, zeta: float, alpha: float, opts: SolverOptions = DEFAULT_OPTIONS) -> float:
    """f(zeta, alpha) = gamma_x zeta^2 E||beta||^2 / h_x^2 + gamma_w E eta(zeta beta + z, alpha)^2.

    The reference-panel fixed point is the root of f(zeta, lambda * zeta) = 1.
    """
    mom = moments_for(spec.prior, opts)
    return _zeta_map(spec, mom, zeta, alpha)


def _zeta_map(spec: ProblemSpec, mom: ThresholdMoments, zeta: float, alpha: float) -> float:
    signal = spec.gamma_x * zeta * zeta * spec.signal_norm2 / spec.h2_x
    return signal + spec.gamma_w * mom.eta_sq(zeta, 1.0, alpha)


def _brent(g: Callable[[float], float], lo: float, hi: float, max_iter: int, what: str, **tols) -> tuple[float, int]:
    root, info = brentq(g, lo, hi, maxiter=max_iter, full_output=True, disp=False, **tols)
    if not info.converged:
        raise NoConvergence(f"{what} root not found in {max_iter} Brent iterations", max_iter=max_iter)
    return root, info.iterations


def _largest_crossing(
    f: Callable[[float], float], what: str, max_iter: int = DEFAULT_OPTIONS.max_iter
) -> tuple[float, int, tuple[float, float]]:
    """Largest root of f(x) = 1 on x >= 0, for f continuous with f(x) -> infinity."""
    hi = 1.0
    while True:
        f_hi = f(hi)
        if f_hi > 1.0 and f(2.0 * hi) >= f_hi:
            break
        hi *= 2.0
        if hi > BRACKET_CAP:
            raise InfeasibleRegime(f"could not bracket the {what} root below {BRACKET_CAP:.3g}")

    grid = np.linspace(0.0, hi, SCAN_POINTS)
    values = np.array([f(x) for x in grid])
    below = np.flatnonzero(values < 1.0)
    if below.size:
        i = int(below[-1])
        lo, top = float(grid[i]), float(grid[i + 1])
    else:
        best = minimize_scalar(f, bounds=(0.0, hi), method="bounded", options={"xatol": 1e-12})
        if best.fun >= 1.0:
            raise InfeasibleRegime(f"{what} map stays above 1 on [0, {hi:.6g}] (minimum {best.fun:.6g})")
        lo, top = float(best.x), hi

    root, iterations = _brent(lambda x: f(x) - 1.0, lo, top, max_iter, what, xtol=1e-15)
    return root, iterations, (lo, top)


def _first_crossing(
    f: Callable[[float], float], what: str, max_iter: int = DEFAULT_OPTIONS.max_iter
) -> tuple[float, int, tuple[float, float]]:
    """Root of f(x) = 1 for f increasing past 1 with f(0) < 1."""
    hi = 1.0
    while f(hi) <= 1.0:
        hi *= 2.0
        if hi > BRACKET_CAP:
            raise InfeasibleRegime(f"could not bracket the {what} root below {BRACKET_CAP:.3g}")
    root, iterations = _brent(lambda x: f(x) - 1.0, 0.0, hi, max_iter, what, xtol=1e-15)
    return root, iterations, (0.0, hi)


def _ref_point(spec, mom, zeta, alpha, iterations, bracket) -> ScalarSEFixedPoint:
    frac = spec.gamma_w * mom.active(zeta, 1.0, alpha)
    if frac >= 1.0:
        raise InfeasibleRegime(f"active fraction gamma_w * P = {frac:.6g} >= 1, so 1/(1 + b*) is not positive")
    b = frac / (1.0 - frac)
    residual = max(abs(_zeta_map(spec, mom, zeta, alpha) - 1.0), abs(b - (1.0 + b) * frac))
    return ScalarSEFixedPoint(
        zeta_star=zeta,
        b_star=b,
        tau_star=(1.0 + b) / zeta,
        alpha=alpha,
        iterations=iterations,
        residual=residual,
        bracket=bracket,
    )


def solve_ref_lasso_se(spec: ProblemSpec, lam: float, opts: SolverOptions = DEFAULT_OPTIONS) -> ScalarSEFixedPoint:
    """(zeta*, b*, tau*) of the reference-panel lasso at penalty ``lam``.

    zeta* is the largest root of f(zeta, lam * zeta) = 1, the one for which 1/(1 + b*) stays positive.
    """
    _require_identity(spec)
    _require_positive("lambda", lam)
    mom = moments_for(spec.prior, opts)
    zeta, iterations, bracket = _largest_crossing(lambda z: _zeta_map(spec, mom, z, lam * z), "zeta", opts.max_iter)
    fp = _ref_point(spec, mom, zeta, lam * zeta, iterations, bracket)
    if fp.residual > opts.tol:
        raise NoConvergence(f"ref-lasso residual {fp.residual:.3g} above {opts.tol}", residual=fp.residual)
    logger.debug(f"ref-lasso lambda={lam:.6g}: zeta*={fp.zeta_star:.10g} b*={fp.b_star:.10g}")
    return fp


def ref_alpha_min(spec: ProblemSpec) -> float:
    """Smallest admissible threshold ratio: root of gamma_w E eta(z, alpha)^2 = 1 (0 when gamma_w <= 1)."""
    return _gaussian_alpha_min(spec.gamma_w)


def _gaussian_alpha_min(gamma: float) -> float:
    if gamma <= 1.0:
        return 0.0
    hi = 1.0
    while gamma * gaussian_eta_sq(hi) >= 1.0:
        hi *= 2.0
    return brentq(lambda a: gamma * gaussian_eta_sq(a) - 1.0, 0.0, hi, xtol=1e-15)


def ref_lasso_at_alpha(
    spec: ProblemSpec, alpha: float, opts: SolverOptions = DEFAULT_OPTIONS
) -> tuple[ScalarSEFixedPoint, float]:
    """Fixed point at threshold ratio ``alpha`` and the penalty lambda(alpha) = alpha / zeta it corresponds to."""
    _require_identity(spec)
    _require_positive("alpha", alpha)
    mom = moments_for(spec.prior, opts)
    if _zeta_map(spec, mom, 0.0, alpha) >= 1.0:
        raise AlphaBelowMin(f"alpha={alpha:.6g} is not above alpha_min", alpha=alpha, alpha_min=ref_alpha_min(spec))
    zeta, iterations, bracket = _first_crossing(lambda z: _zeta_map(spec, mom, z, alpha), "zeta", opts.max_iter)
    fp = _ref_point(spec, mom, zeta, alpha, iterations, bracket)
    return fp, alpha / zeta


def ref_lasso_risk(
    spec: ProblemSpec, lam: float, fp: ScalarSEFixedPoint, opts: SolverOptions = DEFAULT_OPTIONS
) -> RiskReport:
    mom = moments_for(spec.prior, opts)
    zeta, tau = fp.zeta_star, fp.tau_star
    eta_sq = mom.eta_sq(zeta, 1.0, lam * zeta)
    eta_beta = mom.eta_beta(zeta, 1.0, lam * zeta)
    mse = tau * tau * eta_sq - 2.0 * tau * eta_beta + spec.m2
    r2 = spec.h2_s * eta_beta**2 / (spec.m2 * eta_sq) if eta_sq > 0 else 0.0
    return _report(spec, Estimator.REF_LASSO, lam, mse, r2, fp)


def _report(spec, estimator, lam, mse, r2, fp) -> RiskReport:
    if r2 > spec.h2_s + R2_SLACK:
        raise InfeasibleRegime(f"{estimator.value}: R^2 {r2:.12g} exceeds test heritability {spec.h2_s}")
    return RiskReport(
        lam=lam,
        mse=max(mse, 0.0),
        r2=min(max(r2, 0.0), spec.h2_s),
        fixed_point=fp,
        estimator=estimator,
        alpha=getattr(fp, "alpha", None),
    )


@dataclass(frozen=True)
class _LassoPoint:
    tau: float
    active: float
    lam: float


def lasso_alpha_min(spec: ProblemSpec) -> float:
    """alpha_min of the traditional lasso: root of gamma_x E eta(z, alpha)^2 = 1 (0 when gamma_x <= 1)."""
    return _gaussian_alpha_min(spec.gamma_x)


def _lasso_tau(
    spec: ProblemSpec, mom: ThresholdMoments, alpha: float, sigma2: float, max_iter: int = DEFAULT_OPTIONS.max_iter
) -> float:
    """tau solving tau^2 = gamma_x (sigma^2 + E(eta(beta + tau z, alpha tau) - beta)^2)."""
    m2 = spec.m2

    def excess(tau):
        theta = alpha * tau
        mse = mom.eta_sq(1.0, tau, theta) - 2.0 * mom.eta_beta(1.0, tau, theta) + m2
        return spec.gamma_x * (sigma2 + mse) / (tau * tau) - 1.0

    lo = math.sqrt(spec.gamma_x * sigma2)
    if excess(lo) <= 0.0:
        return lo
    hi = 2.0 * lo
    while excess(hi) >= 0.0:
        hi *= 2.0
        if hi > BRACKET_CAP * lo:
            raise InfeasibleRegime(f"no lasso tau root for alpha={alpha:.6g}")
    tau, _ = _brent(excess, lo, hi, max_iter, "tau", xtol=1e-15 * lo, rtol=1e-15)
    return tau


def _lasso_point(spec, mom, alpha, sigma2, max_iter: int = DEFAULT_OPTIONS.max_iter) -> _LassoPoint:
    tau = _lasso_tau(spec, mom, alpha, sigma2, max_iter)
    active = mom.active(1.0, tau, alpha * tau)
    return _LassoPoint(tau=tau, active=active, lam=alpha * tau * (1.0 - spec.gamma_x * active))


def _lasso_fixed_point(spec, mom, alpha, sigma2, point: _LassoPoint, iterations: int) -> ScalarSEFixedPoint:
    shrink = 1.0 - spec.gamma_x * point.active
    if shrink <= 0.0:
        raise InfeasibleRegime(f"alpha={alpha:.6g}: gamma_x * P = {1 - shrink:.6g} >= 1")
    b = 1.0 / shrink - 1.0
    tau = point.tau
    theta = alpha * tau
    mse = mom.eta_sq(1.0, tau, theta) - 2.0 * mom.eta_beta(1.0, tau, theta) + spec.m2
    residual = max(
        abs(tau * tau - spec.gamma_x * (sigma2 + mse)) / (tau * tau),
        abs(b - (1.0 + b) * spec.gamma_x * point.active),
    )
    return ScalarSEFixedPoint(
        zeta_star=(1.0 + b) / tau,
        b_star=b,
        tau_star=tau,
        alpha=alpha,
        iterations=iterations,
        residual=residual,
    )


def lasso_at_alpha(
    spec: ProblemSpec, alpha: float, opts: SolverOptions = DEFAULT_OPTIONS
) -> tuple[ScalarSEFixedPoint, float]:
    """Traditional-lasso fixed point at threshold ratio ``alpha`` and its penalty lambda(alpha)."""
    _require_identity(spec)
    _require_positive("alpha", alpha)
    amin = lasso_alpha_min(spec)
    if alpha <= amin:
        raise AlphaBelowMin(f"alpha={alpha:.6g} is not above alpha_min={amin:.6g}", alpha=alpha, alpha_min=amin)
    mom = moments_for(spec.prior, opts)
    sigma2 = noise_variance(spec, "x")
    point = _lasso_point(spec, mom, alpha, sigma2, opts.max_iter)
    return _lasso_fixed_point(spec, mom, alpha, sigma2, point, 0), point.lam


def solve_lasso_se(spec: ProblemSpec, lam: float, opts: SolverOptions = DEFAULT_OPTIONS) -> ScalarSEFixedPoint:
    """(tau*, b*) of the traditional lasso at penalty ``lam``.

    The threshold ratio alpha is solved for first (lambda(alpha) is increasing above alpha_min); tau then
    follows from its own one-dimensional equation, so both equations hold at the returned point.
    """
    _require_identity(spec)
    _require_positive("lambda", lam)
    mom = moments_for(spec.prior, opts)
    sigma2 = noise_variance(spec, "x")
    amin = lasso_alpha_min(spec)

    def lam_of(alpha):
        return _lasso_point(spec, mom, alpha, sigma2, opts.max_iter).lam

    delta = 1e-4
    lo = amin * (1.0 + delta) + 1e-8
    for _ in range(8):
        if lam_of(lo) < lam:
            break
        delta /= 10.0
        lo = amin * (1.0 + delta) + 1e-10
    else:
        raise InfeasibleRegime(f"lambda={lam:.6g} is below the smallest reachable lasso penalty")
    hi = max(1.0, 2.0 * lo)
    while lam_of(hi) <= lam:
        hi *= 2.0
        if hi > BRACKET_CAP:
            raise InfeasibleRegime(f"could not bracket alpha for lambda={lam:.6g}")
    alpha, iterations = _brent(lambda a: lam_of(a) - lam, lo, hi, opts.max_iter, "alpha", xtol=1e-14, rtol=1e-15)
    point = _lasso_point(spec, mom, alpha, sigma2, opts.max_iter)
    fp = _lasso_fixed_point(spec, mom, alpha, sigma2, point, iterations)
    lam_residual = abs(point.lam - lam) / lam
    if max(fp.residual, lam_residual) > opts.tol:
        raise NoConvergence(
            f"lasso residual {max(fp.residual, lam_residual):.3g} above {opts.tol}",
            max_iter=iterations,
            residual=max(fp.residual, lam_residual),
        )
    logger.debug(f"lasso lambda={lam:.6g}: tau*={fp.tau_star:.10g} b*={fp.b_star:.10g} alpha={alpha:.10g}")
    return fp


def lasso_risk(
    spec: ProblemSpec, lam: float, fp: ScalarSEFixedPoint, opts: SolverOptions = DEFAULT_OPTIONS
) -> RiskReport:
    mom = moments_for(spec.prior, opts)
    tau = fp.tau_star
    mse = tau * tau / spec.gamma_x - noise_variance(spec, "x")
    eta_sq = mom.eta_sq(1.0, tau, fp.alpha * tau)
    r2 = spec.h2_s * (spec.m2 + eta_sq - mse) ** 2 / (4.0 * spec.m2 * eta_sq) if eta_sq > 0 else 0.0
    return _report(spec, Estimator.LASSO, lam, mse, r2, fp)


def correlation_vs_noise(
    prior: SignalPrior, alpha: float, theta: float, opts: SolverOptions = DEFAULT_OPTIONS
) -> float:
    """corr(beta, eta(beta + Theta z, alpha Theta)) as a function of the effective noise level Theta."""
    _require_positive("Theta", theta)
    mom = moments_for(prior, opts)
    eta_sq = mom.eta_sq(1.0, theta, alpha * theta)
    if eta_sq <= 0:
        return 0.0
    return mom.eta_beta(1.0, theta, alpha * theta) / math.sqrt(prior.second_moment * eta_sq)


def check_correlation_decreasing(
    prior: SignalPrior, alpha: float, thetas: Sequence[float], opts: SolverOptions = DEFAULT_OPTIONS
) -> tuple[bool, np.ndarray]:
    """Numeric check that the correlation above decreases along an increasing Theta grid."""
    values = np.array([correlation_vs_noise(prior, alpha, t, opts) for t in thetas])
    return bool(np.all(np.diff(values) <= TIE_TOLERANCE)), values


def theory_risk(
    spec: ProblemSpec, estimator: Estimator, lam: float, opts: SolverOptions = DEFAULT_OPTIONS
) -> RiskReport:
    """Limiting MSE and R^2 of ``estimator`` at penalty ``lam``, dispatching on the covariance model."""
    estimator = Estimator(estimator)
    if estimator is Estimator.LASSO:
        return lasso_risk(spec, lam, solve_lasso_se(spec, lam, opts), opts)
    if estimator is Estimator.REF_LASSO:
        if spec.covariance.is_identity:
            return ref_lasso_risk(spec, lam, solve_ref_lasso_se(spec, lam, opts), opts)
        from refpanel.general_l1 import general_l1_risk, solve_general_l1_se

        fp = solve_general_l1_se(spec, lam, opts.p_mc, opts.mc_reps, opts.seed)
        return general_l1_risk(spec, lam, fp, opts.p_mc, opts.mc_reps, opts.seed)
    from refpanel import ridge_theory

    if estimator is Estimator.RIDGE:
        if spec.covariance.is_identity:
            return ridge_theory.ridge_risk_iid(spec, lam)
        return ridge_theory.ridge_risk_general(spec, lam)
    if spec.covariance.is_identity:
        return ridge_theory.ref_ridge_risk_iid(spec, lam)
    return ridge_theory.ref_ridge_risk_general(spec, lam, ridge_theory.solve_ref_ridge_se_general(spec, lam))


def _score(report: RiskReport, objective: Objective) -> float:
    return report.mse if objective is Objective.MIN_MSE else -report.r2


def best_lambda(
    spec: ProblemSpec,
    estimator: Estimator,
    objective: Objective,
    grid: Sequence[float],
    opts: SolverOptions = DEFAULT_OPTIONS,
) -> tuple[float, RiskReport]:
    """Grid optimum of the objective, refined by a golden-section search in log(lambda) between its neighbours.

    Ties within 1e-12 go to the smallest lambda.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise OutOfRange("lambda grid is empty")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise OutOfRange("lambda grid must be positive and strictly increasing")
    objective = Objective(objective)
    reports = [theory_risk(spec, estimator, float(lam), opts) for lam in grid]
    scores = np.array([_score(r, objective) for r in reports])
    i = int(np.flatnonzero(scores <= scores.min() + TIE_TOLERANCE)[0])
    best_lam, best_report = float(grid[i]), reports[i]

    if 0 < i < grid.size - 1 and scores[i] < scores[i - 1] and scores[i] < scores[i + 1]:
        logs = np.log(grid[i - 1 : i + 2])
        refined = minimize_scalar(
            lambda t: _score(theory_risk(spec, estimator, math.exp(t), opts), objective),
            bracket=tuple(logs),
            method="golden",
            tol=1e-6,
        )
        if logs[0] < refined.x < logs[2] and refined.fun < scores[i] - TIE_TOLERANCE:
            best_lam = math.exp(refined.x)
            best_report = theory_risk(spec, estimator, best_lam, opts)
    logger.debug(f"best lambda for {Estimator(estimator).value} ({objective.value}): {best_lam:.6g}")
    return best_lam, best_report


@dataclass(frozen=True)
class OrderingReport:
    """min-MSE and max-R^2 gaps, reference-panel estimator minus traditional estimator."""

    min_mse_gap: float
    max_r2_gap: float
    ref_best_lambda: float
    plain_best_lambda: float


def ordering_check(
    spec: ProblemSpec,
    ref_estimator: Estimator,
    plain_estimator: Estimator,
    grid: Sequence[float],
    opts: SolverOptions = DEFAULT_OPTIONS,
) -> OrderingReport:
    if not math.isclose(spec.gamma_x, spec.gamma_w, rel_tol=1e-12):
        raise PreconditionError(f"ordering check needs gamma_x == gamma_w, got {spec.gamma_x} and {spec.gamma_w}")
    _, ref_mse = best_lambda(spec, ref_estimator, Objective.MIN_MSE, grid, opts)
    _, plain_mse = best_lambda(spec, plain_estimator, Objective.MIN_MSE, grid, opts)
    ref_lam, ref_r2 = best_lambda(spec, ref_estimator, Objective.MAX_R2, grid, opts)
    plain_lam, plain_r2 = best_lambda(spec, plain_estimator, Objective.MAX_R2, grid, opts)
    return OrderingReport(
        min_mse_gap=ref_mse.mse - plain_mse.mse,
        max_r2_gap=ref_r2.r2 - plain_r2.r2,
        ref_best_lambda=ref_lam,
        plain_best_lambda=plain_lam,
    )


def lasso_ordering_check(
    spec: ProblemSpec, grid: Sequence[float], opts: SolverOptions = DEFAULT_OPTIONS
) -> OrderingReport:
    """Numeric comparison of the lasso and reference-panel lasso at their own optimal penalties."""
    return ordering_check(spec, Estimator.REF_LASSO, Estimator.LASSO, grid, opts)
