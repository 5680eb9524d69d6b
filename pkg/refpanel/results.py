from dataclasses import dataclass
from enum import Enum


class Estimator(str, Enum):
    LASSO = "lasso"
    REF_LASSO = "ref_lasso"
    RIDGE = "ridge"
    REF_RIDGE = "ref_ridge"

    @property
    def uses_panel(self) -> bool:
        return self in (Estimator.REF_LASSO, Estimator.REF_RIDGE)

    @property
    def is_l1(self) -> bool:
        return self in (Estimator.LASSO, Estimator.REF_LASSO)


class Objective(str, Enum):
    MIN_MSE = "min_mse"
    MAX_R2 = "max_r2"


@dataclass(frozen=True)
class ScalarSEFixedPoint:
    """Solution of a scalar (Sigma = I) lasso state evolution.

    ``alpha`` is the threshold-to-noise ratio lambda (1 + b*) / tau*; ``bracket`` is the zeta interval
    the root was isolated in.
    """

    zeta_star: float
    b_star: float
    tau_star: float
    alpha: float
    iterations: int
    residual: float
    bracket: tuple[float, float] | None = None


@dataclass(frozen=True)
class RidgeFixedPoint:
    rho_star: float
    c_star: float
    lam: float
    residual: float = 0.0


@dataclass(frozen=True)
class GeneralSEFixedPoint:
    """Monte Carlo solution of the general-Sigma lasso state evolution, with delta-method standard errors."""

    tau_star: float
    b_star: float
    alpha: float
    lam: float
    zeta_star: float
    mc_reps: int
    p_mc: int
    seed: int
    residual: float
    clamped: bool = False
    zeta_se: float = 0.0
    tau2_se: float = 0.0
    b_se: float = 0.0


FixedPoint = ScalarSEFixedPoint | RidgeFixedPoint | GeneralSEFixedPoint


@dataclass(frozen=True)
class RiskReport:
    lam: float
    mse: float
    r2: float
    fixed_point: FixedPoint
    estimator: Estimator
    alpha: float | None = None
    mse_se: float | None = None
    r2_se: float | None = None

    @property
    def tau_star(self) -> float:
        fp = self.fixed_point
        return fp.rho_star if isinstance(fp, RidgeFixedPoint) else fp.tau_star

    @property
    def b_star(self) -> float:
        fp = self.fixed_point
        return fp.c_star if isinstance(fp, RidgeFixedPoint) else fp.b_star

    def as_dict(self) -> dict[str, float | str | None]:
        return {
            "estimator": self.estimator.value,
            "lambda": self.lam,
            "alpha": self.alpha,
            "tau_star": self.tau_star,
            "b_star": self.b_star,
            "mse": self.mse,
            "r2": self.r2,
            "mse_se": self.mse_se,
            "r2_se": self.r2_se,
        }
