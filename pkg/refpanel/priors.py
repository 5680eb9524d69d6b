import math
from collections.abc import Iterable
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from refpanel.errors import InvalidPrior
from refpanel.quadrature import Quadrature

WEIGHT_TOLERANCE = 1e-12


class PriorKind(Enum):
    BERNOULLI_GAUSSIAN = "bernoulli_gaussian"
    DISCRETE_MIXTURE = "discrete_mixture"
    GAUSSIAN_MIXTURE = "gaussian_mixture"


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    mean: float
    variance: float  # 0 for a Dirac atom


@dataclass(frozen=True)
class SignalPrior:
    """Exchangeable scalar law of the rescaled coefficients beta-bar.

    Every kind is stored as a finite mixture of Gaussians, atoms being components of zero variance.
    Use the classmethod constructors rather than building components by hand.
    """

    kind: PriorKind
    components: tuple[MixtureComponent, ...]
    kappa: float | None = None
    sigma_beta2: float | None = None
    _arrays: tuple[np.ndarray, np.ndarray, np.ndarray] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.components:
            raise InvalidPrior("prior needs at least one component")
        weights = np.array([c.weight for c in self.components], dtype=float)
        means = np.array([c.mean for c in self.components], dtype=float)
        variances = np.array([c.variance for c in self.components], dtype=float)
        for name, arr in (("weight", weights), ("mean", means), ("variance", variances)):
            if not np.all(np.isfinite(arr)):
                raise InvalidPrior(f"non-finite component {name}")
        if np.any(weights < 0):
            raise InvalidPrior("mixture weights must be nonnegative")
        if np.any(variances < 0):
            raise InvalidPrior("component variances must be nonnegative")
        if abs(weights.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise InvalidPrior(f"mixture weights sum to {weights.sum():.15g}, expected 1")
        nonzero = weights[(means != 0) | (variances > 0)].sum()
        if nonzero <= 0:
            raise InvalidPrior("prior puts no mass on nonzero coefficients")
        for arr in (weights, means, variances):
            arr.flags.writeable = False
        object.__setattr__(self, "_arrays", (weights, means, variances))

    @classmethod
    def bernoulli_gaussian(cls, kappa: float, sigma_beta2: float = 1.0) -> "SignalPrior":
        if not (0.0 < kappa <= 1.0):
            raise InvalidPrior(f"kappa must lie in (0, 1], got {kappa}")
        if not (sigma_beta2 > 0 and math.isfinite(sigma_beta2)):
            raise InvalidPrior(f"sigma_beta2 must be positive, got {sigma_beta2}")
        components = [MixtureComponent(kappa, 0.0, sigma_beta2)]
        if kappa < 1.0:
            components.insert(0, MixtureComponent(1.0 - kappa, 0.0, 0.0))
        return cls(PriorKind.BERNOULLI_GAUSSIAN, tuple(components), kappa=kappa, sigma_beta2=sigma_beta2)

    @classmethod
    def discrete(cls, atoms: Iterable[tuple[float, float]]) -> "SignalPrior":
        """Atoms given as (value, weight) pairs."""
        components = tuple(MixtureComponent(float(w), float(v), 0.0) for v, w in atoms)
        return cls(PriorKind.DISCRETE_MIXTURE, components)

    @classmethod
    def gaussian_mixture(cls, components: Iterable[tuple[float, float, float]]) -> "SignalPrior":
        """Components given as (weight, mean, variance) triples."""
        parts = tuple(MixtureComponent(float(w), float(m), float(v)) for w, m, v in components)
        return cls(PriorKind.GAUSSIAN_MIXTURE, parts)

    @property
    def weights(self) -> np.ndarray:
        return self._arrays[0]

    @property
    def means(self) -> np.ndarray:
        return self._arrays[1]

    @property
    def variances(self) -> np.ndarray:
        return self._arrays[2]

    @property
    def second_moment(self) -> float:
        if self.kind is PriorKind.BERNOULLI_GAUSSIAN:
            return self.kappa * self.sigma_beta2
        return float(self.weights @ (self.means**2 + self.variances))

    @property
    def nonzero_probability(self) -> float:
        mask = (self.means != 0) | (self.variances > 0)
        return float(self.weights[mask].sum())

    def sample(self, rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
        idx = rng.choice(len(self.components), size=size, p=self.weights)
        noise = rng.standard_normal(size)
        return self.means[idx] + np.sqrt(self.variances[idx]) * noise

    def quadrature_nodes(self, quad: Quadrature) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights integrating against the prior: atoms exactly, Gaussian components by ``quad``."""
        nodes, weights = [], []
        for w, m, v in zip(self.weights, self.means, self.variances):
            if w == 0:
                continue
            if v == 0:
                nodes.append(np.array([m]))
                weights.append(np.array([w]))
            else:
                nodes.append(m + np.sqrt(v) * quad.nodes)
                weights.append(w * quad.weights)
        return np.concatenate(nodes), np.concatenate(weights)


def prior_second_moment(prior: SignalPrior) -> float:
    return prior.second_moment
