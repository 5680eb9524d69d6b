import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Literal

from refpanel.covariance import CovarianceModel
from refpanel.errors import HeritabilityOutOfRange, OutOfRange
from refpanel.priors import SignalPrior


@dataclass(frozen=True)
class ProblemSpec:
    """Dimensionless asymptotic regime.

    gamma_* are the limits of p/n for the training sample, the reference panel and the test sample;
    h2_x and h2_s are the training and test heritabilities.
    """

    gamma_x: float
    gamma_w: float
    gamma_s: float
    h2_x: float
    h2_s: float
    prior: SignalPrior
    covariance: CovarianceModel = field(default_factory=CovarianceModel.identity)

    def __post_init__(self):
        for name in ("gamma_x", "gamma_w", "gamma_s"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise OutOfRange(f"{name} must be a positive finite aspect ratio, got {value}")
        for name in ("h2_x", "h2_s"):
            _check_heritability(name, getattr(self, name))

    @property
    def m2(self) -> float:
        """E beta-bar^2."""
        return self.prior.second_moment

    @property
    def signal_norm2(self) -> float:
        """Limit of ||beta_0||_Sigma^2 in native units."""
        return self.m2 * self.covariance.mean_eigenvalue()

    def replace(self, **changes) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)


def _check_heritability(name: str, value: float):
    if not (0.0 < value < 1.0):
        raise HeritabilityOutOfRange(f"{name} must lie strictly inside (0, 1), got {value}")


def noise_variance(spec: ProblemSpec, target: Literal["x", "s"] = "x") -> float:
    """sigma^2_eps = E||beta_0||_Sigma^2 (1 - h^2) / h^2 for the training (x) or test (s) response."""
    h2 = spec.h2_x if target == "x" else spec.h2_s
    _check_heritability(f"h2_{target}", h2)
    return spec.signal_norm2 * (1.0 - h2) / h2


class NormalizationDirection(Enum):
    TO_RESCALED = "to_rescaled"
    TO_NATIVE = "to_native"


@dataclass(frozen=True)
class NormalizationScaling:
    """Multiplicative factors taking each quantity from one unit convention to the other.

    Squared norms of coefficient differences pick up ``beta0**2``; with that factor the per-coordinate risk
    (1/p)||.||^2 on the O(1)-entry side equals ||.||^2 on the O(1/sqrt(p))-entry side.
    """

    beta0: float
    x: float
    w: float
    eps_x: float
    y_x: float
    lam: float

    @property
    def squared_norm(self) -> float:
        return self.beta0**2

    def compose(self, other: "NormalizationScaling") -> "NormalizationScaling":
        return NormalizationScaling(
            **{f.name: getattr(self, f.name) * getattr(other, f.name) for f in dataclasses.fields(self)}
        )

    def inverse(self) -> "NormalizationScaling":
        return NormalizationScaling(**{f.name: 1.0 / getattr(self, f.name) for f in dataclasses.fields(self)})

    def is_identity(self, tol: float = 1e-12) -> bool:
        return all(abs(getattr(self, f.name) - 1.0) <= tol for f in dataclasses.fields(self))


def convert_normalization(spec: ProblemSpec, p: int, direction: NormalizationDirection) -> NormalizationScaling:
    """Scaling between native units (penalty lambda/sqrt(p)) and the rescaled O(1)-entry model."""
    if p < 1:
        raise OutOfRange(f"p must be positive, got {p}")
    n_x = p / spec.gamma_x
    n_w = p / spec.gamma_w
    to_rescaled = NormalizationScaling(
        beta0=1.0 / math.sqrt(p),
        x=math.sqrt(n_x),
        w=math.sqrt(n_w),
        eps_x=1.0 / math.sqrt(spec.gamma_x),
        y_x=1.0 / math.sqrt(spec.gamma_x),
        lam=1.0 / math.sqrt(p),
    )
    if direction is NormalizationDirection.TO_RESCALED:
        return to_rescaled
    return to_rescaled.inverse()
