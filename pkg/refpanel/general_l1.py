"""Reference-panel lasso under a general covariance.

The limiting expectations of the state evolution are not available in closed form once Sigma is not the
identity, so they are estimated on a fixed Monte Carlo sample (Z, beta-bar) of ``reps`` rows of length ``p_mc``.
The same sample is reused by every solver iteration, which makes the estimated maps deterministic functions of
(zeta, alpha). In the zeta parametrisation the estimator behaves like tau * eta_alpha(Sigma^{-1/2} z + zeta beta)
with eta_alpha the Sigma-weighted soft threshold.
"""

import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from refpanel.errors import AlphaBelowMin, BracketFailure, InfeasibleRegime, NoConvergence, OutOfRange
from refpanel.lasso_theory import BRACKET_CAP, R2_SLACK, _first_crossing, _largest_crossing
from refpanel.moments import DEFAULT_OPTIONS
from refpanel.prox import MAX_DIMENSION, prox_sigma_batch
from refpanel.results import Estimator, GeneralSEFixedPoint, RiskReport
from refpanel.spec import ProblemSpec

logger = logging.getLogger(__name__)

ROOT_TOLERANCE = 1e-8
DIFF_STEP = 1e-4


@dataclass(eq=False)
class MonteCarloSample:
    """Common random numbers for one (spec, p_mc, reps, seed) combination.

    ``noise`` holds the rows of Z Sigma^{-1/2}; ``beta`` the prior draws in beta-bar units.
    The last prox result is cached and used as the next warm start. The cache is guarded by a lock, so a sample
    can be shared between threads, though concurrent callers then take turns; give each worker its own sample
    for parallel throughput.
    """

    spec: ProblemSpec
    p: int
    reps: int
    seed: int
    noise: np.ndarray = field(init=False, repr=False)
    beta: np.ndarray = field(init=False, repr=False)
    max_prox_dim: int = MAX_DIMENSION
    _last: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if self.reps < 2:
            raise OutOfRange(f"Monte Carlo sample needs at least 2 replicates, got {self.reps}")
        if self.p < 1:
            raise OutOfRange(f"Monte Carlo dimension must be positive, got {self.p}")
        rng = np.random.default_rng(self.seed)
        z = rng.standard_normal((self.reps, self.p))
        self.noise = self.spec.covariance.apply(z, -0.5)
        self.beta = self.spec.prior.sample(rng, (self.reps, self.p))
        self.noise.flags.writeable = False
        self.beta.flags.writeable = False

    @property
    def sigma(self):
        return self.spec.covariance

    @property
    def signal_norm2(self) -> float:
        """E||beta_0||_Sigma^2 at this dimension."""
        return self.spec.m2 * float(np.mean(self.sigma.diagonal_at(self.p)))

    def prox(self, zeta: float, alpha: float) -> tuple[np.ndarray, np.ndarray]:
        """eta_alpha(noise + zeta * beta) for every replicate, with the active-set sizes."""
        key = (float(zeta), float(alpha))
        with self._lock:
            if self._last.get("key") == key:
                return self._last["eta"], self._last["active"]
            eta, _ = prox_sigma_batch(
                self.sigma,
                self.noise + zeta * self.beta,
                alpha,
                warm_start=self._last.get("eta"),
                max_dimension=self.max_prox_dim,
            )
            active = np.count_nonzero(eta, axis=1)
            self._last.update(key=key, eta=eta, active=active)
            return eta, active

    def eta_sq(self, zeta: float, alpha: float) -> np.ndarray:
        """Per-replicate (1/p) ||eta||_Sigma^2."""
        eta, _ = self.prox(zeta, alpha)
        return self.sigma.quad_form(eta) / self.p

    def f(self, zeta: float, alpha: float) -> float:
        signal = self.spec.gamma_x * zeta * zeta * self.signal_norm2 / self.spec.h2_x
        return signal + self.spec.gamma_w * float(np.mean(self.eta_sq(zeta, alpha)))

    def g(self, alpha: float) -> float:
        """(1/n_w) E||eta_alpha(Sigma^{-1/2} z)||_Sigma^2, i.e. f at zeta = 0."""
        return self.f(0.0, alpha)

    def active_fraction(self, zeta: float, alpha: float) -> np.ndarray:
        _, active = self.prox(zeta, alpha)
        return active / self.p


def monte_carlo_sample(
    spec: ProblemSpec, p_mc: int = DEFAULT_OPTIONS.p_mc, reps: int = DEFAULT_OPTIONS.mc_reps, seed: int = 0
) -> MonteCarloSample:
    """Sample at ``p_mc``; a dense covariance fixes the dimension to its own size."""
    cov = spec.covariance
    if not cov.is_diagonal and cov.p != p_mc:
        logger.warning(f"dense covariance has dimension {cov.p}; using it instead of p_mc={p_mc}")
        p_mc = cov.p
    return MonteCarloSample(spec=spec, p=p_mc, reps=reps, seed=seed)


def _sample(spec, p_mc, reps, seed, sample):
    if sample is not None:
        return sample
    return monte_carlo_sample(spec, p_mc, reps, seed)


def alpha_min(
    spec: ProblemSpec,
    p_mc: int = DEFAULT_OPTIONS.p_mc,
    reps: int = DEFAULT_OPTIONS.mc_reps,
    seed: int = 0,
    sample: MonteCarloSample | None = None,
) -> float:
    """Root of g(alpha) = 1; 0 when gamma_w <= 1, where every alpha > 0 is admissible."""
    if spec.gamma_w <= 1.0:
        return 0.0
    sample = _sample(spec, p_mc, reps, seed, sample)
    if sample.g(0.0) <= 1.0:
        raise BracketFailure(f"g(0) = {sample.g(0.0):.6g} is not above 1 on this Monte Carlo sample")
    hi = 1.0
    while sample.g(hi) >= 1.0:
        hi *= 2.0
        if hi > BRACKET_CAP:
            raise BracketFailure(f"could not bracket alpha_min below {BRACKET_CAP:.3g}")
    return brentq(lambda a: sample.g(a) - 1.0, 0.0, hi, xtol=1e-14)


def _fixed_point(sample: MonteCarloSample, lam: float, zeta: float, alpha: float) -> GeneralSEFixedPoint:
    """Assemble (tau*, b*) and their standard errors at a solved zeta."""
    spec = sample.spec
    gamma_w = spec.gamma_w
    frac = sample.active_fraction(zeta, alpha)
    d = float(np.mean(frac))
    residual = abs(sample.f(zeta, alpha) - 1.0)
    common = dict(alpha=alpha, zeta_star=zeta, mc_reps=sample.reps, p_mc=sample.p, seed=sample.seed, residual=residual)
    shrink = 1.0 - gamma_w * d
    if shrink <= 0.0:
        logger.warning(f"alpha={alpha:.6g}: gamma_w * E|A|/p = {1 - shrink:.6g} >= 1, lambda clamped to 0")
        return GeneralSEFixedPoint(tau_star=math.inf, b_star=math.inf, lam=0.0, clamped=True, **common)

    b = gamma_w * d / shrink
    tau = (1.0 + b) / zeta

    # delta method on the replicate spread, with zeta moving along alpha = lam * zeta
    e = sample.eta_sq(zeta, alpha)
    h = DIFF_STEP * zeta
    slope = (sample.f(zeta + h, lam * (zeta + h)) - sample.f(zeta - h, lam * (zeta - h))) / (2.0 * h)
    root_r = math.sqrt(sample.reps)
    zeta_se = gamma_w * float(np.std(e, ddof=1)) / (root_r * abs(slope)) if slope != 0 else math.inf
    d_se = float(np.std(frac, ddof=1)) / root_r
    b_se = gamma_w * (1.0 + b) ** 2 * d_se
    dtau2_dzeta = -2.0 * tau * tau / zeta
    dtau2_dd = 2.0 * gamma_w * (1.0 + b) ** 3 / (zeta * zeta)
    tau2_se = math.hypot(dtau2_dzeta * zeta_se, dtau2_dd * d_se)
    return GeneralSEFixedPoint(
        tau_star=tau, b_star=b, lam=lam, zeta_se=zeta_se, tau2_se=tau2_se, b_se=b_se, **common
    )


def calibrate_alpha(
    spec: ProblemSpec,
    lam: float,
    p_mc: int = DEFAULT_OPTIONS.p_mc,
    reps: int = DEFAULT_OPTIONS.mc_reps,
    seed: int = 0,
    sample: MonteCarloSample | None = None,
) -> float:
    """alpha(lambda) = lambda * zeta*, with zeta* the largest root of f(zeta, lambda zeta) = 1."""
    if not (lam > 0 and math.isfinite(lam)):
        raise OutOfRange(f"lambda must be positive and finite, got {lam}")
    sample = _sample(spec, p_mc, reps, seed, sample)
    zeta, _, _ = _largest_crossing(lambda z: sample.f(z, lam * z), "zeta")
    return lam * zeta


def _zeta_at_alpha(sample: MonteCarloSample, alpha: float) -> float:
    if sample.f(0.0, alpha) >= 1.0:
        raise AlphaBelowMin(f"alpha={alpha:.6g} is not above alpha_min on this Monte Carlo sample", alpha=alpha)
    zeta, _, _ = _first_crossing(lambda z: sample.f(z, alpha), "zeta")
    return zeta


def general_l1_at_alpha(
    spec: ProblemSpec,
    alpha: float,
    p_mc: int = DEFAULT_OPTIONS.p_mc,
    reps: int = DEFAULT_OPTIONS.mc_reps,
    seed: int = 0,
    sample: MonteCarloSample | None = None,
) -> GeneralSEFixedPoint:
    """Fixed point parametrised by the threshold ratio; ``lam`` is lambda(alpha), clamped to 0 when infeasible."""
    if not (alpha > 0 and math.isfinite(alpha)):
        raise OutOfRange(f"alpha must be positive and finite, got {alpha}")
    sample = _sample(spec, p_mc, reps, seed, sample)
    zeta = _zeta_at_alpha(sample, alpha)
    return _fixed_point(sample, alpha / zeta, zeta, alpha)


def lambda_of_alpha(
    spec: ProblemSpec,
    alpha: float,
    p_mc: int = DEFAULT_OPTIONS.p_mc,
    reps: int = DEFAULT_OPTIONS.mc_reps,
    seed: int = 0,
    sample: MonteCarloSample | None = None,
) -> float:
    """lambda(alpha) = alpha tau* (1 - gamma_w E|A|/p)_+."""
    return general_l1_at_alpha(spec, alpha, p_mc, reps, seed, sample).lam


def solve_general_l1_se(
    spec: ProblemSpec,
    lam: float,
    p_mc: int = DEFAULT_OPTIONS.p_mc,
    reps: int = DEFAULT_OPTIONS.mc_reps,
    seed: int = 0,
    sample: MonteCarloSample | None = None,
) -> GeneralSEFixedPoint:
    sample = _sample(spec, p_mc, reps, seed, sample)
    alpha = calibrate_alpha(spec, lam, sample=sample)
    zeta = alpha / lam
    fp = _fixed_point(sample, lam, zeta, alpha)
    if fp.clamped:
        raise InfeasibleRegime(f"lambda={lam:.6g}: active fraction too large for a finite b*")
    if fp.residual > ROOT_TOLERANCE:
        raise NoConvergence(f"general lasso residual {fp.residual:.3g} above {ROOT_TOLERANCE}", residual=fp.residual)
    logger.debug(
        f"general ref-lasso lambda={lam:.6g}: tau*={fp.tau_star:.8g} (se {fp.tau2_se:.2g} on tau^2) b*={fp.b_star:.8g}"
    )
    return fp


def _replicate_terms(sample: MonteCarloSample, lam: float, zeta: float, scale: float):
    """Per-replicate (1/p) <bhat, beta>_Sigma, ||bhat||_Sigma^2, ||beta||_Sigma^2 and squared error."""
    eta, _ = sample.prox(zeta, lam * zeta)
    bhat = scale * eta
    sigma = sample.sigma
    cross = np.sum(sigma.apply(bhat) * sample.beta, axis=1) / sample.p
    est = sigma.quad_form(bhat) / sample.p
    truth = sigma.quad_form(sample.beta) / sample.p
    return cross, est, truth, est - 2.0 * cross + truth


def _r2(h2_s: float, cross: np.ndarray, est: np.ndarray, truth: np.ndarray) -> float:
    denom = np.mean(truth) * np.mean(est)
    return float(h2_s * np.mean(cross) ** 2 / denom) if denom > 0 else 0.0


def _jackknife_se(cross: np.ndarray, est: np.ndarray, truth: np.ndarray, h2_s: float) -> float:
    n = cross.size
    keep = ~np.eye(n, dtype=bool)
    loo = np.array([_r2(h2_s, cross[k], est[k], truth[k]) for k in keep])
    return float(math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


def general_l1_risk(
    spec: ProblemSpec,
    lam: float,
    fp: GeneralSEFixedPoint,
    p_mc: int = DEFAULT_OPTIONS.p_mc,
    reps: int = DEFAULT_OPTIONS.mc_reps,
    seed: int = 0,
    sample: MonteCarloSample | None = None,
) -> RiskReport:
    """MSE and R^2 of the reference-panel lasso from the Monte Carlo sample, with standard errors."""
    sample = _sample(spec, p_mc, reps, seed, sample)
    zeta = fp.zeta_star
    scale = (1.0 + fp.b_star) / zeta
    cross, est, truth, sq_err = _replicate_terms(sample, lam, zeta, scale)
    mse = float(np.mean(sq_err))
    r2 = _r2(spec.h2_s, cross, est, truth)

    # sensitivity to zeta*, with b* held fixed
    h = DIFF_STEP * zeta
    up = _replicate_terms(sample, lam, zeta + h, (1.0 + fp.b_star) / (zeta + h))
    down = _replicate_terms(sample, lam, zeta - h, (1.0 + fp.b_star) / (zeta - h))
    dmse = (np.mean(up[3]) - np.mean(down[3])) / (2.0 * h)
    dr2 = (_r2(spec.h2_s, *up[:3]) - _r2(spec.h2_s, *down[:3])) / (2.0 * h)
    zeta_se = fp.zeta_se if math.isfinite(fp.zeta_se) else 0.0
    mse_se = math.hypot(float(np.std(sq_err, ddof=1)) / math.sqrt(sample.reps), dmse * zeta_se)
    r2_se = math.hypot(_jackknife_se(cross, est, truth, spec.h2_s), dr2 * zeta_se)

    if r2 > spec.h2_s + R2_SLACK:
        raise InfeasibleRegime(f"general ref-lasso R^2 {r2:.12g} exceeds test heritability {spec.h2_s}")
    return RiskReport(
        lam=lam,
        mse=max(mse, 0.0),
        r2=min(max(r2, 0.0), spec.h2_s),
        fixed_point=fp,
        estimator=Estimator.REF_LASSO,
        alpha=fp.alpha,
        mse_se=mse_se,
        r2_se=r2_se,
    )
