"""Finite-sample ground truth: synthetic data, the four estimators and Monte Carlo replication.

Coefficients live in native units (beta_0 = beta-bar / sqrt(p)); rows of X, W and S are N(0, Sigma) and the
lasso penalty enters as lambda / sqrt(p).
"""

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from refpanel.covariance import CovarianceModel
from refpanel.errors import DimensionTooSmall, NoConvergence, OutOfRange, SingularSystem
from refpanel.moments import soft_threshold
from refpanel.prox import kkt_residual
from refpanel.results import Estimator
from refpanel.spec import ProblemSpec

logger = logging.getLogger(__name__)

MIN_P = 50
MAX_P = 10_000
MIN_N = 10
KKT_TOLERANCE = 1e-7
SCREEN_AFTER = 5
MAX_SWEEPS = 10_000


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """One draw of the training sample (X, y_x), the reference panel W and the test sample (S, y_s)."""

    X: np.ndarray
    W: np.ndarray
    S: np.ndarray
    y_x: np.ndarray
    y_s: np.ndarray
    beta0: np.ndarray
    eps_x: np.ndarray
    eps_s: np.ndarray
    sigma: CovarianceModel
    seed: int

    @property
    def p(self) -> int:
        return self.beta0.size

    @property
    def n_x(self) -> int:
        return self.X.shape[0]

    @property
    def n_w(self) -> int:
        return self.W.shape[0]

    @property
    def n_s(self) -> int:
        return self.S.shape[0]

    @cached_property
    def xtx(self) -> np.ndarray:
        """X^T X / n_x."""
        return self.X.T @ self.X / self.n_x

    @cached_property
    def wtw(self) -> np.ndarray:
        """W^T W / n_w."""
        return self.W.T @ self.W / self.n_w

    @cached_property
    def xty(self) -> np.ndarray:
        """X^T y_x / n_x, the marginal association statistics."""
        return self.X.T @ self.y_x / self.n_x


def sample_sizes(spec: ProblemSpec, p: int) -> tuple[int, int, int]:
    return round(p / spec.gamma_x), round(p / spec.gamma_w), round(p / spec.gamma_s)


def _check_dimensions(spec: ProblemSpec, p: int):
    if p < MIN_P:
        raise DimensionTooSmall(f"p={p} is below the minimum of {MIN_P}")
    if p > MAX_P:
        raise OutOfRange(f"p={p} exceeds the dense-storage limit of {MAX_P}")
    for name, n in zip(("n_x", "n_w", "n_s"), sample_sizes(spec, p)):
        if n < MIN_N:
            raise DimensionTooSmall(f"{name}={n} is below the minimum of {MIN_N}")


def _rows(rng: np.random.Generator, sigma: CovarianceModel, n: int, p: int) -> np.ndarray:
    """n rows drawn as N(0, I) Sigma^{1/2}."""
    return sigma.apply(rng.standard_normal((n, p)), 0.5)


def generate(spec: ProblemSpec, p: int, seed: int) -> SyntheticDataset:
    """Draw a dataset at dimension ``p``.

    The noise variances are set from the realised ||beta_0||_Sigma^2, so the heritabilities hold in expectation
    given beta_0.
    """
    _check_dimensions(spec, p)
    n_x, n_w, n_s = sample_sizes(spec, p)
    sigma = spec.covariance
    sigma.dimension(p)
    streams = np.random.SeedSequence(seed).spawn(4)
    beta_rng, train_rng, panel_rng, test_rng = (np.random.default_rng(s) for s in streams)

    beta0 = spec.prior.sample(beta_rng, p) / math.sqrt(p)
    signal = float(sigma.quad_form(beta0))
    var_x = signal * (1.0 - spec.h2_x) / spec.h2_x
    var_s = signal * (1.0 - spec.h2_s) / spec.h2_s

    X = _rows(train_rng, sigma, n_x, p)
    eps_x = math.sqrt(var_x) * train_rng.standard_normal(n_x)
    W = _rows(panel_rng, sigma, n_w, p)
    S = _rows(test_rng, sigma, n_s, p)
    eps_s = math.sqrt(var_s) * test_rng.standard_normal(n_s)
    logger.debug(f"generated dataset p={p} n_x={n_x} n_w={n_w} n_s={n_s} seed={seed}")
    return SyntheticDataset(
        X=X,
        W=W,
        S=S,
        y_x=X @ beta0 + eps_x,
        y_s=S @ beta0 + eps_s,
        beta0=beta0,
        eps_x=eps_x,
        eps_s=eps_s,
        sigma=sigma,
        seed=seed,
    )


def _coordinate_descent(
    q: np.ndarray,
    c: np.ndarray,
    theta: float,
    tol: float = KKT_TOLERANCE,
    max_sweeps: int = MAX_SWEEPS,
    warm_start: np.ndarray | None = None,
) -> np.ndarray:
    """argmin 1/2 b^T q b - c^T b + theta ||b||_1 by cyclic coordinate descent on the gradient g = q b - c.

    After a few full sweeps the updates are restricted to the current support until it settles; a full sweep
    then checks the KKT conditions.
    """
    p = c.size
    diag = np.diag(q).copy()
    if np.any(diag <= 0):
        raise SingularSystem("Gram matrix has a non-positive diagonal entry")
    beta = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)
    grad = q @ beta - c

    def sweep(indices) -> float:
        nonlocal grad
        biggest = 0.0
        for j in indices:
            old = beta[j]
            new = float(soft_threshold(old - grad[j] / diag[j], theta / diag[j]))
            if new != old:
                delta = new - old
                beta[j] = new
                grad += delta * q[j]
                biggest = max(biggest, abs(delta))
        return biggest

    sweeps = 0
    full = range(p)
    while sweeps < max_sweeps:
        sweep(full)
        sweeps += 1
        grad = q @ beta - c
        kkt = float(kkt_residual(grad, beta, theta))
        if kkt < tol:
            logger.debug(f"coordinate descent converged in {sweeps} sweeps (kkt {kkt:.2e})")
            return beta
        if sweeps >= SCREEN_AFTER:
            support = np.flatnonzero(beta)
            while support.size and sweeps < max_sweeps:
                sweeps += 1
                if sweep(support) < 1e-3 * tol:
                    break
    raise NoConvergence(
        f"coordinate descent did not converge in {max_sweeps} sweeps",
        max_iter=max_sweeps,
        residual=float(kkt_residual(q @ beta - c, beta, theta)),
    )


def _check_lambda(lam: float):
    if not (lam >= 0 and math.isfinite(lam)):
        raise OutOfRange(f"lambda must be nonnegative and finite, got {lam}")


def fit_ref_lasso(
    dataset: SyntheticDataset, lam: float, tol: float = KKT_TOLERANCE, warm_start: np.ndarray | None = None
) -> np.ndarray:
    """argmin 1/(2 n_w) b^T W^T W b - b^T X^T y_x / n_x + lambda / sqrt(p) ||b||_1."""
    _check_lambda(lam)
    return _coordinate_descent(dataset.wtw, dataset.xty, lam / math.sqrt(dataset.p), tol, warm_start=warm_start)


def fit_lasso(
    dataset: SyntheticDataset, lam: float, tol: float = KKT_TOLERANCE, warm_start: np.ndarray | None = None
) -> np.ndarray:
    _check_lambda(lam)
    return _coordinate_descent(dataset.xtx, dataset.xty, lam / math.sqrt(dataset.p), tol, warm_start=warm_start)


def _ridge_solve(gram: np.ndarray, c: np.ndarray, lam: float, n: int) -> np.ndarray:
    _check_lambda(lam)
    if lam == 0 and n < c.size:
        raise SingularSystem(f"unpenalised ridge with n={n} < p={c.size}")
    try:
        return scipy.linalg.solve(gram + lam * np.eye(c.size), c, assume_a="pos")
    except np.linalg.LinAlgError as err:
        raise SingularSystem(f"ridge system is singular at lambda={lam}") from err


def fit_ridge(dataset: SyntheticDataset, lam: float) -> np.ndarray:
    """(X^T X / n_x + lambda I)^{-1} X^T y_x / n_x."""
    return _ridge_solve(dataset.xtx, dataset.xty, lam, dataset.n_x)


def fit_ref_ridge(dataset: SyntheticDataset, lam: float) -> np.ndarray:
    """(W^T W / n_w + lambda I)^{-1} X^T y_x / n_x."""
    return _ridge_solve(dataset.wtw, dataset.xty, lam, dataset.n_w)


def fit(
    dataset: SyntheticDataset, estimator: Estimator, lam: float, warm_start: np.ndarray | None = None
) -> np.ndarray:
    match Estimator(estimator):
        case Estimator.LASSO:
            return fit_lasso(dataset, lam, warm_start=warm_start)
        case Estimator.REF_LASSO:
            return fit_ref_lasso(dataset, lam, warm_start=warm_start)
        case Estimator.RIDGE:
            return fit_ridge(dataset, lam)
        case Estimator.REF_RIDGE:
            return fit_ref_ridge(dataset, lam)


def evaluate(dataset: SyntheticDataset, beta_hat: np.ndarray) -> tuple[float, float]:
    """Out-of-sample (MSE, R^2): ||beta_hat - beta_0||_Sigma^2 and the squared cosine of y_s and S beta_hat."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    if beta_hat.shape != dataset.beta0.shape:
        raise OutOfRange(f"estimate has shape {beta_hat.shape}, expected {dataset.beta0.shape}")
    mse = float(dataset.sigma.quad_form(beta_hat - dataset.beta0))
    pred = dataset.S @ beta_hat
    pred_norm2 = float(pred @ pred)
    if pred_norm2 == 0.0:
        return mse, 0.0
    r2 = float(dataset.y_s @ pred) ** 2 / (float(dataset.y_s @ dataset.y_s) * pred_norm2)
    return mse, r2


@dataclass(frozen=True)
class EmpiricalRisk:
    """Per-replicate out-of-sample risks with their means and standard errors."""

    estimator: Estimator
    lam: float
    mse_values: np.ndarray
    r2_values: np.ndarray

    @property
    def reps(self) -> int:
        return self.mse_values.size

    @property
    def mse(self) -> float:
        return float(np.mean(self.mse_values))

    @property
    def r2(self) -> float:
        return float(np.mean(self.r2_values))

    @property
    def mse_se(self) -> float:
        return float(np.std(self.mse_values, ddof=1) / math.sqrt(self.reps))

    @property
    def r2_se(self) -> float:
        return float(np.std(self.r2_values, ddof=1) / math.sqrt(self.reps))


def replicate_seeds(seed: int, reps: int) -> list[int]:
    """Independent 64-bit seeds, one per replicate, derived from the master seed."""
    return [int(child.generate_state(1, np.uint64)[0]) for child in np.random.SeedSequence(seed).spawn(reps)]


def _run_replicates(fn, seeds: Sequence[int], jobs: int) -> list:
    def guarded(item):
        i, child = item
        try:
            return fn(child)
        except Exception as err:
            err.add_note(f"replicate {i} (seed {child})")
            raise

    if jobs <= 1:
        return [guarded(item) for item in enumerate(seeds)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(guarded, enumerate(seeds)))


def _check_reps(reps: int):
    if reps < 2:
        raise OutOfRange(f"Monte Carlo needs at least 2 replicates, got {reps}")


def monte_carlo(
    spec: ProblemSpec, p: int, lam: float, estimator: Estimator, reps: int, seed: int, jobs: int = 1
) -> EmpiricalRisk:
    """Mean and standard error of the out-of-sample risks over ``reps`` independent datasets."""
    _check_reps(reps)
    estimator = Estimator(estimator)

    def one(child: int) -> tuple[float, float]:
        dataset = generate(spec, p, child)
        return evaluate(dataset, fit(dataset, estimator, lam))

    values = np.array(_run_replicates(one, replicate_seeds(seed, reps), jobs))
    risk = EmpiricalRisk(estimator=estimator, lam=lam, mse_values=values[:, 0], r2_values=values[:, 1])
    logger.info(f"{estimator.value} lambda={lam:.6g}: mse={risk.mse:.6g} (se {risk.mse_se:.2g}) r2={risk.r2:.4f}")
    return risk


def monte_carlo_sweep(
    spec: ProblemSpec,
    p: int,
    lams: Sequence[float],
    estimator: Estimator,
    reps: int,
    seed: int,
    jobs: int = 1,
) -> list[EmpiricalRisk]:
    """Risks along a penalty grid, one dataset per replicate shared by every penalty.

    The lasso path is solved from the largest penalty down, each fit warm-started from the previous one.
    """
    _check_reps(reps)
    estimator = Estimator(estimator)
    lams = [float(lam) for lam in lams]
    order = sorted(range(len(lams)), key=lambda k: lams[k], reverse=True)

    def one(child: int) -> np.ndarray:
        dataset = generate(spec, p, child)
        out = np.empty((len(lams), 2))
        previous = None
        for k in order:
            beta = fit(dataset, estimator, lams[k], warm_start=previous if estimator.is_l1 else None)
            previous = beta
            out[k] = evaluate(dataset, beta)
        return out

    values = np.array(_run_replicates(one, replicate_seeds(seed, reps), jobs))
    return [
        EmpiricalRisk(estimator=estimator, lam=lam, mse_values=values[:, k, 0], r2_values=values[:, k, 1])
        for k, lam in enumerate(lams)
    ]
