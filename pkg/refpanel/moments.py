"""Gaussian moments of the soft-threshold denoiser under a mixture prior.

All three quantities are taken over X = c * beta + tau * z with z ~ N(0, 1) independent of beta ~ prior:

    eta_sq   = E eta(X, theta)^2
    active   = P(|X| > theta)
    eta_beta = E beta * eta(X, theta)
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Literal, Protocol

import numpy as np

from refpanel.errors import OutOfRange
from refpanel.priors import SignalPrior
from refpanel.quadrature import Quadrature, expect_2d, gauss_hermite, normal_cdf, normal_pdf


@dataclass(frozen=True)
class SolverOptions:
    method: Literal["closed_form", "quadrature"] = "closed_form"
    quadrature_order: int = 96
    tol: float = 1e-9
    max_iter: int = 500  # Brent iterations per root
    # general-Sigma Monte Carlo path
    p_mc: int = 400
    mc_reps: int = 100
    seed: int = 0
    max_prox_dim: int = 2000


DEFAULT_OPTIONS = SolverOptions()


def soft_threshold(v, theta):
    """sign(v) (|v| - theta)_+, elementwise."""
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


class ThresholdMoments(Protocol):
    prior: SignalPrior

    def eta_sq(self, c: float, tau: float, theta: float) -> float: ...

    def active(self, c: float, tau: float, theta: float) -> float: ...

    def eta_beta(self, c: float, tau: float, theta: float) -> float: ...


class ClosedFormMoments:
    """Exact moments through the Gaussian CDF, summed over mixture components.

    Within a component of mean m and variance v, X ~ N(c m, c^2 v + tau^2) and Stein's identity gives
    E beta eta(X) = m E eta(X) + c v P(|X| > theta).
    """

    def __init__(self, prior: SignalPrior):
        self.prior = prior
        keep = prior.weights > 0
        self._w = prior.weights[keep]
        self._m = prior.means[keep]
        self._v = prior.variances[keep]

    def _terms(self, c: float, tau: float, theta: float):
        if tau < 0 or theta < 0:
            raise OutOfRange("tau and theta must be nonnegative")
        mu = c * self._m
        s = np.sqrt(c * c * self._v + tau * tau)
        if np.any(s == 0):
            raise OutOfRange("degenerate component: zero variance after scaling")
        a_pos = mu - theta
        a_neg = -mu - theta
        d_pos = a_pos / s
        d_neg = a_neg / s
        cdf_pos, cdf_neg = normal_cdf(d_pos), normal_cdf(d_neg)
        pdf_pos, pdf_neg = normal_pdf(d_pos), normal_pdf(d_neg)
        active = cdf_pos + cdf_neg
        second = (a_pos**2 + s**2) * cdf_pos + a_pos * s * pdf_pos + (a_neg**2 + s**2) * cdf_neg + a_neg * s * pdf_neg
        first = (a_pos * cdf_pos + s * pdf_pos) - (a_neg * cdf_neg + s * pdf_neg)
        cross = self._m * first + c * self._v * active
        return active, second, cross

    def eta_sq(self, c, tau, theta):
        return float(self._w @ self._terms(c, tau, theta)[1])

    def active(self, c, tau, theta):
        return float(self._w @ self._terms(c, tau, theta)[0])

    def eta_beta(self, c, tau, theta):
        return float(self._w @ self._terms(c, tau, theta)[2])


class QuadratureMoments:
    """Reference evaluation of the same expectations by tensor quadrature split at the threshold kinks."""

    def __init__(self, prior: SignalPrior, quad: Quadrature):
        self.prior = prior
        self.quad = quad

    def _expect(self, c, tau, theta, g):
        if tau <= 0:
            raise OutOfRange("quadrature moments need tau > 0")

        def kinks(beta):
            return np.stack([(theta - c * beta) / tau, (-theta - c * beta) / tau], axis=1)

        return expect_2d(self.prior, self.quad, lambda z, b: g(c * b + tau * z, b), kinks=kinks)

    def eta_sq(self, c, tau, theta):
        return self._expect(c, tau, theta, lambda x, b: soft_threshold(x, theta) ** 2)

    def active(self, c, tau, theta):
        return self._expect(c, tau, theta, lambda x, b: (np.abs(x) > theta).astype(float))

    def eta_beta(self, c, tau, theta):
        return self._expect(c, tau, theta, lambda x, b: b * soft_threshold(x, theta))


@lru_cache(maxsize=64)
def threshold_moments(prior: SignalPrior, method: str = "closed_form", order: int = 96) -> ThresholdMoments:
    if method == "closed_form":
        return ClosedFormMoments(prior)
    if method == "quadrature":
        return QuadratureMoments(prior, gauss_hermite(order))
    raise OutOfRange(f"unknown moment method '{method}'")


def moments_for(prior: SignalPrior, opts: SolverOptions) -> ThresholdMoments:
    return threshold_moments(prior, opts.method, opts.quadrature_order)


def gaussian_eta_sq(alpha: float) -> float:
    """E eta(z, alpha)^2 for z ~ N(0, 1)."""
    return 2.0 * ((1.0 + alpha * alpha) * normal_cdf(-alpha) - alpha * normal_pdf(alpha))
