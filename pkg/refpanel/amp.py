"""Approximate message passing for the reference-panel estimators.

The lasso recursion, in native units, is

    v_t       = beta_t + Sigma^{-1} [(1 + b_t) X^T y_x / n_x - W^T r_t / n_w]
    beta_t+1  = eta_Sigma(v_t, lambda (1 + b_t) / sqrt(p)),   k_t = |active set|
    b_t+1     = (1 + b_t) k_t / n_w
    r_t+1     = W beta_t+1 + (k_t / n_w) r_t

and its fixed points are exactly the reference-panel lasso solutions. The ridge recursion swaps the prox for
the resolvent Sigma (Sigma + lambda (1 + c_t))^{-1} and k_t for its trace. A generic symmetric matrix AMP core
is provided as well, together with the q = 3 embedding that reproduces the lasso recursion through it.
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.optimize import brentq

from refpanel.errors import Diverged, OutOfRange, PreconditionError
from refpanel.general_l1 import monte_carlo_sample
from refpanel.lasso_theory import solve_ref_lasso_se
from refpanel.lab import SyntheticDataset
from refpanel.moments import DEFAULT_OPTIONS, SolverOptions, moments_for, soft_threshold
from refpanel.prox import prox_sigma_batch
from refpanel.quadrature import gauss_hermite
from refpanel.reporting import write_csv
from refpanel.results import GeneralSEFixedPoint, RidgeFixedPoint, ScalarSEFixedPoint
from refpanel.spec import ProblemSpec

logger = logging.getLogger(__name__)

DIVERGENCE_BOUND = 1e8
HUTCHINSON_PROBES = 8
HUTCHINSON_STEP = 1e-5
CROSS_ORDER = 40
TRAJECTORY_COLUMNS = ("t", "tau2_emp", "tau2_se", "b_t", "dist_to_estimator")


@dataclass(frozen=True, eq=False)
class AmpState:
    """Iterate t: beta_t, the panel residual track r_t, the Onsager scalar b_t and the effective observation v_t.

    For the ridge recursion ``b`` holds c_t.
    """

    t: int
    beta: np.ndarray
    r: np.ndarray
    b: float
    v: np.ndarray
    active: int | None = None


class InitKind(Enum):
    ZERO = "zero"
    ORACLE = "oracle"
    WARM = "warm"


@dataclass(frozen=True, eq=False)
class AmpInit:
    kind: InitKind = InitKind.ZERO
    fixed_point: ScalarSEFixedPoint | GeneralSEFixedPoint | RidgeFixedPoint | None = None
    beta: np.ndarray | None = None
    seed: int = 0

    @classmethod
    def zero(cls) -> "AmpInit":
        return cls()

    @classmethod
    def oracle(cls, fixed_point, seed: int = 0) -> "AmpInit":
        """Start from the state-evolution fixed point: beta_0 = eta((1 + b*) beta_0 + tau* Sigma^{-1/2} z / sqrt(p))."""
        return cls(InitKind.ORACLE, fixed_point=fixed_point, seed=seed)

    @classmethod
    def warm(cls, beta: np.ndarray) -> "AmpInit":
        """Start at a given estimate with the Onsager scalar and residual track of a stationary point."""
        return cls(InitKind.WARM, beta=np.asarray(beta, dtype=float))


def _noise_draw(dataset: SyntheticDataset, scale: float, seed: int) -> np.ndarray:
    z = np.random.default_rng(seed).standard_normal(dataset.p)
    return scale * dataset.sigma.apply(z, -0.5) / math.sqrt(dataset.p)


def _diverged(beta: np.ndarray) -> bool:
    return not np.all(np.isfinite(beta)) or float(np.max(np.abs(beta), initial=0.0)) > DIVERGENCE_BOUND


def _handle_divergence(states: list[AmpState], on_divergence: str, what: str) -> list[AmpState]:
    message = f"{what} diverged after {len(states)} iterations (|beta|_inf > {DIVERGENCE_BOUND:.0e})"
    if on_divergence == "stop":
        logger.warning(message)
        return states
    raise Diverged(message, trajectory=states)


def _check_run(lam: float, t_max: int, on_divergence: str):
    if not (lam > 0 and math.isfinite(lam)):
        raise OutOfRange(f"lambda must be positive and finite, got {lam}")
    if t_max < 0:
        raise OutOfRange(f"t_max must be nonnegative, got {t_max}")
    if on_divergence not in ("raise", "stop"):
        raise OutOfRange(f"on_divergence must be 'raise' or 'stop', got {on_divergence!r}")


def run_ref_lasso_amp(
    dataset: SyntheticDataset,
    lam: float,
    t_max: int,
    init: AmpInit | None = None,
    on_divergence: Literal["raise", "stop"] = "raise",
    memory: bool = True,
) -> list[AmpState]:
    """Iterates 0..t_max of the reference-panel lasso recursion.

    ``memory=False`` drops the Onsager correction (b_t held at 0, no residual memory), for comparison only.
    """
    _check_run(lam, t_max, on_divergence)
    init = init or AmpInit.zero()
    sigma, W, p, n_w = dataset.sigma, dataset.W, dataset.p, dataset.n_w
    root_p = math.sqrt(p)

    def prox(v: np.ndarray, b: float) -> np.ndarray:
        return prox_sigma_batch(sigma, v[None, :], lam * (1.0 + b) / root_p, max_dimension=p)[0][0]

    match init.kind:
        case InitKind.ZERO:
            beta, b, r = np.zeros(p), 0.0, np.zeros(n_w)
        case InitKind.ORACLE:
            fp = init.fixed_point
            if fp is None:
                raise PreconditionError("oracle initialisation needs a fixed point")
            b = fp.b_star
            beta = prox((1.0 + b) * dataset.beta0 + _noise_draw(dataset, fp.tau_star, init.seed), b)
            r = W @ beta
        case InitKind.WARM:
            beta = init.beta.copy()
            k = np.count_nonzero(beta)
            if k >= n_w:
                raise PreconditionError(f"warm start has {k} nonzeros, at least n_w={n_w}")
            b = k / (n_w - k)
            r = (1.0 + b) * (W @ beta)

    states: list[AmpState] = []
    for t in range(t_max + 1):
        v = beta + sigma.solve((1.0 + b) * dataset.xty - W.T @ r / n_w)
        nxt = prox(v, b)
        k = int(np.count_nonzero(nxt))
        states.append(AmpState(t=t, beta=beta, r=r, b=b, v=v, active=k))
        if t == t_max:
            break
        if _diverged(nxt):
            return _handle_divergence(states, on_divergence, "lasso AMP")
        if memory:
            r = W @ nxt + (k / n_w) * r
            b = (1.0 + b) * k / n_w
        else:
            r = W @ nxt
        beta = nxt
    logger.debug(f"lasso AMP: {t_max} iterations, final b_t={states[-1].b:.6g} active={states[-1].active}")
    return states


def _resolvent(dataset: SyntheticDataset) -> Callable[[np.ndarray, float], tuple[np.ndarray, float]]:
    """v -> (Sigma (Sigma + theta)^{-1} v, trace of the same map)."""
    sigma, p = dataset.sigma, dataset.p
    if sigma.is_diagonal:
        s = sigma.spectrum_at(p)

        def apply(v, theta):
            shrink = s / (s + theta)
            return shrink * v, float(shrink.sum())

        return apply
    s, vecs = sigma.eigh_at(p)

    def apply_dense(v, theta):
        shrink = s / (s + theta)
        return vecs @ (shrink * (vecs.T @ v)), float(shrink.sum())

    return apply_dense


def _stationary_c(s: np.ndarray, lam: float, n_w: int) -> float:
    """c solving c = (1 + c) sum(s / (s + lam (1 + c))) / n_w."""

    def equation(c):
        return (1.0 + c) * float(np.sum(s / (s + lam * (1.0 + c)))) / n_w - c

    hi = 1.0
    while equation(hi) > 0:
        hi *= 2.0
    return brentq(equation, 0.0, hi, xtol=1e-15)


def run_ref_ridge_amp(
    dataset: SyntheticDataset,
    lam: float,
    t_max: int,
    init: AmpInit | None = None,
    on_divergence: Literal["raise", "stop"] = "raise",
) -> list[AmpState]:
    """Iterates of the reference-panel ridge recursion; ``AmpState.b`` carries c_t."""
    _check_run(lam, t_max, on_divergence)
    init = init or AmpInit.zero()
    sigma, W, p, n_w = dataset.sigma, dataset.W, dataset.p, dataset.n_w
    resolve = _resolvent(dataset)

    match init.kind:
        case InitKind.ZERO:
            beta, c, r = np.zeros(p), 0.0, np.zeros(n_w)
        case InitKind.ORACLE:
            fp = init.fixed_point
            if not isinstance(fp, RidgeFixedPoint):
                raise PreconditionError("ridge oracle initialisation needs a RidgeFixedPoint")
            c = fp.c_star
            obs = (1.0 + c) * dataset.beta0 + _noise_draw(dataset, fp.rho_star, init.seed)
            beta = resolve(obs, lam * (1.0 + c))[0]
            r = W @ beta
        case InitKind.WARM:
            beta = init.beta.copy()
            c = _stationary_c(sigma.spectrum_at(p), lam, n_w)
            r = (1.0 + c) * (W @ beta)

    states: list[AmpState] = []
    for t in range(t_max + 1):
        v = beta + sigma.solve((1.0 + c) * dataset.xty - W.T @ r / n_w)
        nxt, div = resolve(v, lam * (1.0 + c))
        states.append(AmpState(t=t, beta=beta, r=r, b=c, v=v))
        if t == t_max:
            break
        if _diverged(nxt):
            return _handle_divergence(states, on_divergence, "ridge AMP")
        r = W @ nxt + (div / n_w) * r
        c = (1.0 + c) * div / n_w
        beta = nxt
    logger.debug(f"ridge AMP: {t_max} iterations, final c_t={states[-1].b:.6g}")
    return states


def sample_goe(p: int, seed: int | np.random.Generator | None = None) -> np.ndarray:
    """G + G^T with G_ij ~ N(0, 1/(2p)): off-diagonal variance 1/p, diagonal variance 2/p."""
    if p < 2:
        raise OutOfRange(f"GOE dimension must be at least 2, got {p}")
    rng = np.random.default_rng(seed)
    g = rng.normal(scale=math.sqrt(1.0 / (2.0 * p)), size=(p, p))
    return g + g.T


class MatrixAmpProgram:
    """A symmetric matrix AMP: X^{s+1} = A m^s - m^{s-1} (B^s)^T, m^s = f_s(X^s).

    ``denoiser(s, X)`` maps an N' x q iterate to an N' x q output. ``onsager(s, X)`` returns the q x q average
    Jacobian B^s = (1/N') sum_i d f_i / d x_i; when omitted it is estimated with Rademacher probes and central
    differences, which requires the denoiser to be free of side effects.
    """

    def __init__(
        self,
        initial: np.ndarray,
        denoiser: Callable[[int, np.ndarray], np.ndarray] | None = None,
        onsager: Callable[[int, np.ndarray], np.ndarray] | None = None,
        blocks: Sequence[int] | None = None,
        probe_seed: int = 0,
    ):
        initial = np.asarray(initial, dtype=float)
        if initial.ndim == 1:
            initial = initial[:, None]
        self.initial = initial
        self._denoiser = denoiser
        self._onsager = onsager
        self.blocks = tuple(blocks) if blocks is not None else (initial.shape[0],)
        if sum(self.blocks) != initial.shape[0]:
            raise OutOfRange(f"blocks {self.blocks} do not add up to N'={initial.shape[0]}")
        self._probe_rng = np.random.default_rng(probe_seed)

    @property
    def n(self) -> int:
        return self.initial.shape[0]

    @property
    def q(self) -> int:
        return self.initial.shape[1]

    def coupling(self, rng: np.random.Generator) -> np.ndarray:
        return sample_goe(self.n, rng)

    def denoise(self, s: int, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self._denoiser(s, x), dtype=float)
        return out.reshape(self.n, self.q)

    def onsager(self, s: int, x: np.ndarray) -> np.ndarray:
        if self._onsager is not None:
            return np.asarray(self._onsager(s, x), dtype=float).reshape(self.q, self.q)
        return self._hutchinson(s, x)

    def _hutchinson(self, s: int, x: np.ndarray) -> np.ndarray:
        step = HUTCHINSON_STEP * max(1.0, float(np.sqrt(np.mean(x * x))))
        jac = np.zeros((self.q, self.q))
        for _ in range(HUTCHINSON_PROBES):
            delta = self._probe_rng.choice([-1.0, 1.0], size=self.n)
            for k in range(self.q):
                bump = np.zeros_like(x)
                bump[:, k] = step * delta
                diff = (self.denoise(s, x + bump) - self.denoise(s, x - bump)) / (2.0 * step)
                jac[:, k] += delta @ diff
        return jac / (HUTCHINSON_PROBES * self.n)


@dataclass
class MatrixAmpResult:
    x: list[np.ndarray] = field(default_factory=list)
    m: list[np.ndarray] = field(default_factory=list)


def run_symmetric_matrix_amp(program: MatrixAmpProgram, seed: int, t_max: int) -> MatrixAmpResult:
    """Iterates X^1..X^t_max and m^0..m^t_max of ``program`` driven by its coupling matrix."""
    if t_max < 1:
        raise OutOfRange(f"t_max must be at least 1, got {t_max}")
    a = program.coupling(np.random.default_rng(seed))
    result = MatrixAmpResult(m=[program.initial])
    m_prev = np.zeros_like(program.initial)
    m = program.initial
    onsager = np.zeros((program.q, program.q))
    for s in range(1, t_max + 1):
        x = a @ m - m_prev @ onsager.T
        if _diverged(x):
            raise Diverged(f"matrix AMP diverged at iteration {s}", trajectory=result.x)
        m_prev, m = m, program.denoise(s, x)
        onsager = program.onsager(s, x)
        result.x.append(x)
        result.m.append(m)
    return result


class RefLassoEmbedding(MatrixAmpProgram):
    """The reference-panel lasso recursion (Sigma = I, zero start) as a q = 3 symmetric matrix AMP.

    Rows are ordered (panel, training, coefficients) with sizes (n_w, n_x, p). The coupling is a GOE matrix
    whose off-diagonal block is replaced by [W; X] / sqrt(N'). Column 0 carries the signal, column 1 the AMP
    track and column 2 stays empty. Odd steps act on the sample rows, even steps on the coefficient rows, and
    beta_t is read from m^{2t}.
    """

    def __init__(self, dataset: SyntheticDataset, lam: float):
        if not dataset.sigma.is_identity:
            raise PreconditionError("the matrix-AMP embedding is defined for an identity covariance")
        self.dataset = dataset
        self.lam = lam
        n_w, n_x, p = dataset.n_w, dataset.n_x, dataset.p
        total = n_w + n_x + p
        self.scale = math.sqrt(total)
        self._w_rows = slice(0, n_w)
        self._x_rows = slice(n_w, n_w + n_x)
        self._p_rows = slice(n_w + n_x, total)
        initial = np.zeros((total, 3))
        initial[self._p_rows, 0] = self.scale * dataset.beta0
        super().__init__(initial, blocks=(n_w, n_x, p))
        self.b = 0.0
        self.active = 0

    def coupling(self, rng: np.random.Generator) -> np.ndarray:
        a = sample_goe(self.n, rng)
        k = np.vstack([self.dataset.W, self.dataset.X]) / self.scale
        a[: k.shape[0], self._p_rows] = k
        a[self._p_rows, : k.shape[0]] = k.T
        return a

    def denoise(self, s: int, x: np.ndarray) -> np.ndarray:
        ds = self.dataset
        out = np.zeros_like(x)
        if s % 2:
            out[self._w_rows, 1] = -self.scale * x[self._w_rows, 1] / ds.n_w
            out[self._x_rows, 1] = self.scale * (1.0 + self.b) * (x[self._x_rows, 0] + ds.eps_x) / ds.n_x
        else:
            theta = self.lam * (1.0 + self.b) / math.sqrt(ds.p)
            beta = soft_threshold(x[self._p_rows, 1] + (1.0 + self.b) * ds.beta0, theta)
            self.active = int(np.count_nonzero(beta))
            self.b = (1.0 + self.b) * self.active / ds.n_w
            out[self._p_rows, 0] = self.scale * ds.beta0
            out[self._p_rows, 1] = self.scale * beta
        return out

    def onsager(self, s: int, x: np.ndarray) -> np.ndarray:
        jac = np.zeros((3, 3))
        if s % 2:
            jac[1, 1] = -1.0 / self.scale
            jac[1, 0] = (1.0 + self.b) / self.scale
        else:
            jac[1, 1] = self.active / self.scale
        return jac

    def betas(self, result: MatrixAmpResult) -> list[np.ndarray]:
        """beta_0, beta_1, ... read off the even iterates."""
        return [m[self._p_rows, 1] / self.scale for m in result.m[::2]]


def ref_lasso_embedding(dataset: SyntheticDataset, lam: float) -> RefLassoEmbedding:
    return RefLassoEmbedding(dataset, lam)


@dataclass(frozen=True)
class SETrajectory:
    """State-evolution trajectory: tau_t^2 (rho_t^2 for ridge), b_t (c_t) and the one-step cross terms."""

    tau2: np.ndarray
    b: np.ndarray
    cross: np.ndarray | None = None

    def __len__(self) -> int:
        return self.tau2.size


def _initial_state(spec, lam, init, signal, solve_fixed_point) -> tuple[float, float]:
    if isinstance(init, tuple):
        return float(init[0]), float(init[1])
    if init == "zero":
        return spec.gamma_x * signal / spec.h2_x, 0.0
    if init == "oracle":
        fp = solve_fixed_point()
        return fp.tau_star**2, fp.b_star
    raise OutOfRange(f"unknown state-evolution initialisation {init!r}")


def _cross_term(spec, lam, tau2, b, cross_prev, quad_nodes) -> float:
    """gamma_w E[eta(v_t) eta(v_t+1)] + gamma_x (1 + b_t+1)(1 + b_t+2) E beta^2 / h_x^2 for jointly Gaussian noise."""
    (t0, t1), (b0, b1, b2) = tau2, b
    u, w, beta, weight = quad_nodes
    s0, s1 = math.sqrt(t0), math.sqrt(t1)
    rho = min(max(cross_prev / (s0 * s1), -1.0), 1.0)
    n0 = s0 * u
    n1 = s1 * (rho * u + math.sqrt(1.0 - rho * rho) * w)
    e0 = soft_threshold(n0 + (1.0 + b0) * beta, lam * (1.0 + b0))
    e1 = soft_threshold(n1 + (1.0 + b1) * beta, lam * (1.0 + b1))
    joint = float(np.sum(weight * e0 * e1))
    return spec.gamma_w * joint + spec.gamma_x * (1.0 + b1) * (1.0 + b2) * spec.m2 / spec.h2_x


def _cross_nodes(spec: ProblemSpec):
    quad = gauss_hermite(CROSS_ORDER)
    b_nodes, b_weights = spec.prior.quadrature_nodes(quad)
    u, w, beta = np.meshgrid(quad.nodes, quad.nodes, b_nodes, indexing="ij")
    weight = np.einsum("i,j,k->ijk", quad.weights, quad.weights, b_weights)
    return u, w, beta, weight


def se_recursion(
    spec: ProblemSpec,
    lam: float,
    t_max: int,
    init: Literal["zero", "oracle"] | tuple[float, float] = "zero",
    opts: SolverOptions = DEFAULT_OPTIONS,
) -> SETrajectory:
    """(tau_t^2, b_t) describing v_t ~ (1 + b_t) beta + tau_t Sigma^{-1/2} z / sqrt(p).

        b_t+1     = (1 + b_t) gamma_w P(|v_t| > lambda (1 + b_t))
        tau_t+1^2 = gamma_w E eta(v_t)^2 + gamma_x (1 + b_t+1)^2 E||beta||_Sigma^2 / h_x^2

    Identity covariances use the closed-form moments and also return the cross terms tau_{t,t+1}; other
    covariances use the Monte Carlo sample of ``opts``.
    """
    if t_max < 0:
        raise OutOfRange(f"t_max must be nonnegative, got {t_max}")
    identity = spec.covariance.is_identity
    sample = None if identity else monte_carlo_sample(spec, opts.p_mc, opts.mc_reps, opts.seed)
    signal = spec.m2 if identity else sample.signal_norm2

    def solve_fixed_point():
        if identity:
            return solve_ref_lasso_se(spec, lam, opts)
        from refpanel.general_l1 import solve_general_l1_se

        return solve_general_l1_se(spec, lam, sample=sample)

    tau2_t, b_t = _initial_state(spec, lam, init, signal, solve_fixed_point)
    mom = moments_for(spec.prior, opts) if identity else None
    tau2, bs = [tau2_t], [b_t]
    for _ in range(t_max):
        tau = math.sqrt(tau2_t)
        theta = lam * (1.0 + b_t)
        if identity:
            eta_sq = mom.eta_sq(1.0 + b_t, tau, theta)
            active = mom.active(1.0 + b_t, tau, theta)
        else:
            zeta, alpha = (1.0 + b_t) / tau, theta / tau
            eta_sq = tau2_t * float(np.mean(sample.eta_sq(zeta, alpha)))
            active = float(np.mean(sample.active_fraction(zeta, alpha)))
        b_t = (1.0 + b_t) * spec.gamma_w * active
        tau2_t = spec.gamma_w * eta_sq + spec.gamma_x * (1.0 + b_t) ** 2 * signal / spec.h2_x
        tau2.append(tau2_t)
        bs.append(b_t)

    cross = None
    if identity and t_max >= 1:
        nodes = _cross_nodes(spec)
        # the first pair shares only the signal term (exact for the zero start, where beta_0 = 0)
        cross_t = spec.gamma_x * (1.0 + bs[0]) * (1.0 + bs[1]) * spec.m2 / spec.h2_x
        values = [cross_t]
        for t in range(t_max - 1):
            cross_t = _cross_term(
                spec, lam, (tau2[t], tau2[t + 1]), (bs[t], bs[t + 1], bs[t + 2]), cross_t, nodes
            )
            values.append(cross_t)
        cross = np.array(values)
    return SETrajectory(tau2=np.array(tau2), b=np.array(bs), cross=cross)


def ridge_se_recursion(
    spec: ProblemSpec,
    lam: float,
    t_max: int,
    init: Literal["zero"] | tuple[float, float] = "zero",
) -> SETrajectory:
    """(rho_t^2, c_t) of the reference-panel ridge recursion over the spectrum of Sigma.

        rho_t+1^2 = gamma_w (rho_t^2 E R^2 + u_t^2 E||beta||^2 E[s R^2]) + gamma_x u_t+1^2 E beta^2 E[s] / h_x^2

    with u_t = 1 + c_t and R = s / (s + lambda u_t).
    """
    if t_max < 0:
        raise OutOfRange(f"t_max must be nonnegative, got {t_max}")
    cov = spec.covariance
    s = np.ones(1) if cov.is_identity else cov.spectrum_at()
    m2 = spec.m2
    mean_s = float(np.mean(s))
    if isinstance(init, tuple):
        rho2, c = float(init[0]), float(init[1])
    elif init == "zero":
        rho2, c = spec.gamma_x * m2 * mean_s / spec.h2_x, 0.0
    else:
        raise OutOfRange(f"unknown ridge state-evolution initialisation {init!r}")
    rho2s, cs = [rho2], [c]
    for _ in range(t_max):
        u = 1.0 + c
        shrink = s / (s + lam * u)
        c = u * spec.gamma_w * float(np.mean(shrink))
        u_next = 1.0 + c
        rho2 = spec.gamma_w * (rho2 * float(np.mean(shrink**2)) + u * u * m2 * float(np.mean(s * shrink**2)))
        rho2 += spec.gamma_x * u_next**2 * m2 * mean_s / spec.h2_x
        rho2s.append(rho2)
        cs.append(c)
    return SETrajectory(tau2=np.array(rho2s), b=np.array(cs))


def trajectory_rows(
    states: Sequence[AmpState],
    dataset: SyntheticDataset,
    estimator_beta: np.ndarray | None = None,
    se: SETrajectory | None = None,
) -> list[dict[str, float | int | None]]:
    """Per-iteration rows: empirical ||v_t - (1 + b_t) beta_0||_Sigma^2, its prediction, b_t and the distance
    ||beta_t - beta_hat||^2 to a reference estimate."""
    rows = []
    for state in states:
        resid = state.v - (1.0 + state.b) * dataset.beta0
        rows.append(
            {
                "t": state.t,
                "tau2_emp": float(dataset.sigma.quad_form(resid)),
                "tau2_se": float(se.tau2[state.t]) if se is not None and state.t < len(se) else None,
                "b_t": float(state.b),
                "dist_to_estimator": (
                    float(np.sum((state.beta - estimator_beta) ** 2)) if estimator_beta is not None else None
                ),
            }
        )
    return rows


def write_trajectory_csv(path: str | Path, rows: Sequence[dict], provenance: dict | None = None) -> Path:
    return write_csv(path, TRAJECTORY_COLUMNS, rows, provenance)
