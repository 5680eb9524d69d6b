"""Proximal operator of theta * ||w||_1 in the Sigma-weighted metric:

    eta_theta(v) = argmin_w  1/2 ||w - v||_Sigma^2 + theta ||w||_1

Identity and diagonal Sigma reduce to elementwise soft thresholding; a dense Sigma is solved by cyclic
coordinate descent, batched over rows so many Monte Carlo draws are processed at once.
"""

import logging
from dataclasses import dataclass

import numpy as np

from refpanel.covariance import CovarianceModel
from refpanel.errors import NoConvergence, OutOfRange
from refpanel.moments import soft_threshold

logger = logging.getLogger(__name__)

CHANGE_TOLERANCE = 1e-10
KKT_TOLERANCE = 1e-8
MAX_SWEEPS = 100_000
MAX_DIMENSION = 2000


@dataclass(frozen=True)
class ProxProblem:
    sigma: CovarianceModel
    v: np.ndarray
    theta: float

    def __post_init__(self):
        if not self.theta >= 0:
            raise OutOfRange(f"theta must be nonnegative, got {self.theta}")


@dataclass(frozen=True)
class ProxSolution:
    w: np.ndarray
    active_set: np.ndarray
    kkt_residual: float
    sweeps: int = 0


def kkt_residual(gradient: np.ndarray, w: np.ndarray, theta: float | np.ndarray) -> np.ndarray:
    """Per-row KKT violation of g + theta * sign(w) = 0 on the support and |g| <= theta off it."""
    active = w != 0
    on = np.where(active, np.abs(gradient + theta * np.sign(w)), 0.0)
    off = np.where(active, 0.0, np.maximum(np.abs(gradient) - theta, 0.0))
    return np.max(np.maximum(on, off), axis=-1)


def prox_sigma_batch(
    sigma: CovarianceModel,
    v: np.ndarray,
    theta: float,
    warm_start: np.ndarray | None = None,
    max_sweeps: int = MAX_SWEEPS,
    max_dimension: int = MAX_DIMENSION,
) -> tuple[np.ndarray, int]:
    """Row-wise prox of a (reps, p) array. Returns the solutions and the number of sweeps used."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    p = v.shape[1]
    if theta < 0:
        raise OutOfRange(f"theta must be nonnegative, got {theta}")
    if theta == 0:
        return v.copy(), 0
    if sigma.is_identity:
        return soft_threshold(v, theta), 0
    if sigma.is_diagonal:
        return soft_threshold(v, theta / sigma.spectrum_at(p)), 0
    if p > max_dimension:
        raise OutOfRange(f"dense prox dimension {p} exceeds the configured maximum {max_dimension}")

    mat = sigma.matrix_at(p)
    diag = np.diag(mat).copy()
    w = np.zeros_like(v) if warm_start is None else np.array(warm_start, dtype=float)
    grad = (w - v) @ mat
    for sweep in range(1, max_sweeps + 1):
        biggest = 0.0
        for j in range(p):
            old = w[:, j]
            new = soft_threshold(old - grad[:, j] / diag[j], theta / diag[j])
            delta = new - old
            moved = np.abs(delta).max()
            if moved > 0.0:
                w[:, j] = new
                grad += np.outer(delta, mat[j])
                biggest = max(biggest, moved)
        if biggest < CHANGE_TOLERANCE:
            # refresh the running gradient before testing optimality
            grad = (w - v) @ mat
            if np.max(kkt_residual(grad, w, theta)) < KKT_TOLERANCE:
                return w, sweep
    residual = float(np.max(kkt_residual((w - v) @ mat, w, theta)))
    raise NoConvergence(f"prox did not converge in {max_sweeps} sweeps", max_iter=max_sweeps, residual=residual)


def prox_sigma(problem: ProxProblem, warm_start: np.ndarray | None = None) -> ProxSolution:
    v = np.asarray(problem.v, dtype=float).ravel()
    start = None if warm_start is None else np.atleast_2d(warm_start)
    w, sweeps = prox_sigma_batch(problem.sigma, v[None, :], problem.theta, warm_start=start)
    w = w[0]
    grad = problem.sigma.apply(w - v)
    return ProxSolution(
        w=w,
        active_set=np.flatnonzero(w),
        kkt_residual=float(kkt_residual(grad, w, problem.theta)),
        sweeps=sweeps,
    )


def div_eta(solution: ProxSolution) -> int:
    """Divergence of the prox at v: the size of the active set (almost surely)."""
    return int(solution.active_set.size)


def prox_objective(sigma: CovarianceModel, v: np.ndarray, theta: float, w: np.ndarray) -> float:
    d = np.asarray(w, dtype=float) - np.asarray(v, dtype=float)
    return float(0.5 * sigma.quad_form(d) + theta * np.abs(w).sum())
