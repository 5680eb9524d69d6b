import logging
from collections.abc import Callable
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import ndtr

from refpanel.errors import NonFinite, OutOfRange

if TYPE_CHECKING:
    from refpanel.priors import SignalPrior

logger = logging.getLogger(__name__)

DEFAULT_ORDER = 96
PANEL_ORDER = 80
Z_LIMIT = 10.0

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class Quadrature:
    """Nodes and weights integrating against the standard Gaussian density."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        weights = np.array(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise OutOfRange("quadrature nodes and weights must be 1-D arrays of equal length")
        nodes.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def expect(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """E f(z) for z ~ N(0, 1)."""
        return float(self.weights @ f(self.nodes))


@lru_cache(maxsize=8)
def gauss_hermite(order: int = DEFAULT_ORDER) -> Quadrature:
    """Gauss-Hermite rule rescaled from the physicists' weight exp(-x^2) to N(0, 1)."""
    if order < 1:
        raise OutOfRange(f"quadrature order must be positive, got {order}")
    x, w = np.polynomial.hermite.hermgauss(order)
    return Quadrature(nodes=np.sqrt(2.0) * x, weights=w / np.sqrt(np.pi), order=order)


@lru_cache(maxsize=8)
def _legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def normal_pdf(x):
    return np.exp(-0.5 * np.square(x)) / _SQRT_2PI


def normal_cdf(x):
    return ndtr(x)


def _piecewise_z_rule(breaks: np.ndarray, panel_order: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row Gauss-Legendre rule on [-Z_LIMIT, Z_LIMIT] split at ``breaks`` (shape (B, K)).

    Returns z nodes and Gaussian-weighted weights, both of shape (B, (K + 1) * panel_order).
    """
    rows = breaks.shape[0]
    inner = np.clip(breaks, -Z_LIMIT, Z_LIMIT)
    edges = np.concatenate(
        [np.full((rows, 1), -Z_LIMIT), np.sort(inner, axis=1), np.full((rows, 1), Z_LIMIT)],
        axis=1,
    )
    lo, hi = edges[:, :-1], edges[:, 1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x, w = _legendre(panel_order)
    z = mid[:, :, None] + half[:, :, None] * x[None, None, :]
    wz = half[:, :, None] * w[None, None, :] * normal_pdf(z)
    return z.reshape(rows, -1), wz.reshape(rows, -1)


def expect_2d(
    prior: "SignalPrior",
    quad: Quadrature,
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    kinks: Callable[[np.ndarray], np.ndarray] | None = None,
    panel_order: int = PANEL_ORDER,
) -> float:
    """E f(z, beta) for z ~ N(0, 1) independent of beta ~ prior.

    ``f`` is called once with broadcastable arrays ``z`` of shape (1, M) or (B, M) and ``beta`` of shape (B, 1).
    Atoms of the prior are integrated exactly, Gaussian components by ``quad``. When ``kinks`` is given it maps
    the beta nodes (shape (B,)) to the z-locations (shape (B, K)) where f is not smooth; the z axis is then
    integrated by Gauss-Legendre panels split at those points instead of by ``quad``.
    """
    beta, beta_w = prior.quadrature_nodes(quad)
    if kinks is None:
        values = np.asarray(f(quad.nodes[None, :], beta[:, None]), dtype=float)
        values = np.broadcast_to(values, (beta.size, quad.nodes.size))
        if not np.all(np.isfinite(values)):
            raise NonFinite("integrand produced NaN/Inf at a quadrature node")
        return float(beta_w @ values @ quad.weights)

    breaks = np.atleast_2d(np.asarray(kinks(beta), dtype=float))
    if breaks.shape[0] != beta.size:
        breaks = np.broadcast_to(breaks.reshape(1, -1), (beta.size, breaks.size))
    z, wz = _piecewise_z_rule(breaks, panel_order)
    values = np.asarray(f(z, beta[:, None]), dtype=float)
    values = np.broadcast_to(values, z.shape)
    if not np.all(np.isfinite(values)):
        raise NonFinite("integrand produced NaN/Inf at a quadrature node")
    return float(beta_w @ np.sum(values * wz, axis=1))
