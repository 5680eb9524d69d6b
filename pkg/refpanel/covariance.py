import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg

from refpanel.errors import InvalidCovariance, PreconditionError

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-10


class CovarianceKind(Enum):
    IDENTITY = "identity"
    SPECTRUM = "spectrum"
    DENSE = "dense"


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Predictor covariance Sigma.

    A ``SPECTRUM`` model stands for the diagonal matrix of its eigenvalues. When asked for a dimension other
    than the length of its eigenvalue list, the list is resampled by quantiles so the limiting spectral
    distribution is kept.
    """

    kind: CovarianceKind
    p: int | None = None
    eigenvalues: np.ndarray | None = None
    matrix: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.kind is CovarianceKind.SPECTRUM:
            eigs = np.array(self.eigenvalues, dtype=float).ravel()
            if eigs.size == 0:
                raise InvalidCovariance("spectrum needs at least one eigenvalue")
            _check_eigenvalues(eigs)
            eigs = np.sort(eigs)
            eigs.flags.writeable = False
            object.__setattr__(self, "eigenvalues", eigs)
        elif self.kind is CovarianceKind.DENSE:
            mat = np.array(self.matrix, dtype=float)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise InvalidCovariance(f"covariance matrix must be square, got shape {mat.shape}")
            if not np.all(np.isfinite(mat)):
                raise InvalidCovariance("covariance matrix has non-finite entries")
            asym = float(np.max(np.abs(mat - mat.T)))
            if asym > SYMMETRY_TOLERANCE:
                raise InvalidCovariance(f"covariance matrix is not symmetric (max asymmetry {asym:.3g})")
            mat = 0.5 * (mat + mat.T)
            vals, vecs = np.linalg.eigh(mat)
            _check_eigenvalues(vals)
            mat.flags.writeable = False
            object.__setattr__(self, "matrix", mat)
            object.__setattr__(self, "p", mat.shape[0])
            self._cache[("eigh", mat.shape[0])] = (vals, vecs)
        elif self.p is not None and self.p < 1:
            raise InvalidCovariance(f"dimension must be positive, got {self.p}")

    @classmethod
    def identity(cls, p: int | None = None) -> "CovarianceModel":
        return cls(CovarianceKind.IDENTITY, p=p)

    @classmethod
    def spectrum(cls, eigenvalues) -> "CovarianceModel":
        return cls(CovarianceKind.SPECTRUM, eigenvalues=eigenvalues)

    @classmethod
    def dense(cls, matrix) -> "CovarianceModel":
        return cls(CovarianceKind.DENSE, matrix=matrix)

    @classmethod
    def ar1(cls, p: int, rho: float) -> "CovarianceModel":
        """Sigma_ij = rho^|i - j|, a common stand-in for banded linkage disequilibrium."""
        if not (-1.0 < rho < 1.0):
            raise InvalidCovariance(f"AR(1) correlation must lie in (-1, 1), got {rho}")
        idx = np.arange(p)
        return cls.dense(rho ** np.abs(idx[:, None] - idx[None, :]))

    @property
    def is_identity(self) -> bool:
        return self.kind is CovarianceKind.IDENTITY

    @property
    def is_diagonal(self) -> bool:
        return self.kind is not CovarianceKind.DENSE

    def dimension(self, p: int | None = None) -> int:
        if self.kind is CovarianceKind.DENSE:
            if p is not None and p != self.p:
                raise PreconditionError(f"dense covariance has dimension {self.p}, requested {p}")
            return self.p
        if p is not None:
            return p
        if self.kind is CovarianceKind.SPECTRUM:
            return self.eigenvalues.size
        if self.p is None:
            raise PreconditionError("identity covariance has no intrinsic dimension; pass p")
        return self.p

    def spectrum_at(self, p: int | None = None) -> np.ndarray:
        """Ascending eigenvalues of Sigma at dimension p."""
        p = self.dimension(p)
        key = ("spectrum", p)
        if key not in self._cache:
            if self.kind is CovarianceKind.IDENTITY:
                eigs = np.ones(p)
            elif self.kind is CovarianceKind.SPECTRUM:
                m = self.eigenvalues.size
                if m == p:
                    eigs = self.eigenvalues.copy()
                else:
                    eigs = self.eigenvalues[np.floor((np.arange(p) + 0.5) * m / p).astype(int)]
            else:
                eigs = self.eigh_at(p)[0].copy()
            eigs.flags.writeable = False
            self._cache[key] = eigs
        return self._cache[key]

    def mean_eigenvalue(self, p: int | None = None) -> float:
        """tr(Sigma)/p, the per-coordinate scale of ||beta||_Sigma^2."""
        if self.kind is CovarianceKind.IDENTITY:
            return 1.0
        if self.kind is CovarianceKind.SPECTRUM and p is None:
            return float(np.mean(self.eigenvalues))
        return float(np.mean(self.spectrum_at(p)))

    def diagonal_at(self, p: int | None = None) -> np.ndarray:
        if self.kind is CovarianceKind.DENSE:
            return np.diag(self.matrix).copy()
        return self.spectrum_at(p)

    def matrix_at(self, p: int | None = None) -> np.ndarray:
        p = self.dimension(p)
        if self.kind is CovarianceKind.DENSE:
            return self.matrix
        if self.kind is CovarianceKind.IDENTITY:
            return np.eye(p)
        return np.diag(self.spectrum_at(p))

    def eigh_at(self, p: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        p = self.dimension(p)
        key = ("eigh", p)
        if key not in self._cache:
            if self.kind is CovarianceKind.DENSE:
                self._cache[key] = np.linalg.eigh(self.matrix)
            else:
                self._cache[key] = (self.spectrum_at(p), np.eye(p))
        return self._cache[key]

    def sqrt_at(self, p: int | None = None) -> np.ndarray:
        return self._power(p, 0.5)

    def inv_sqrt_at(self, p: int | None = None) -> np.ndarray:
        return self._power(p, -0.5)

    def inv_at(self, p: int | None = None) -> np.ndarray:
        return self._power(p, -1.0)

    def _power(self, p: int | None, exponent: float) -> np.ndarray:
        p = self.dimension(p)
        key = ("power", p, exponent)
        if key not in self._cache:
            if self.kind is CovarianceKind.DENSE:
                vals, vecs = self.eigh_at(p)
                out = (vecs * vals**exponent) @ vecs.T
                out = 0.5 * (out + out.T)
            else:
                out = np.diag(self.spectrum_at(p) ** exponent)
            out.flags.writeable = False
            self._cache[key] = out
        return self._cache[key]

    def quad_form(self, x: np.ndarray, p: int | None = None) -> np.ndarray:
        """Row-wise x^T Sigma x for x of shape (..., p)."""
        x = np.asarray(x, dtype=float)
        p = self.dimension(p if p is not None else x.shape[-1])
        if self.kind is CovarianceKind.IDENTITY:
            return np.sum(x * x, axis=-1)
        if self.kind is CovarianceKind.SPECTRUM:
            return np.sum(self.spectrum_at(p) * x * x, axis=-1)
        return np.sum((x @ self.matrix) * x, axis=-1)

    def apply(self, x: np.ndarray, exponent: float = 1.0) -> np.ndarray:
        """Row-wise x Sigma^exponent for x of shape (..., p)."""
        x = np.asarray(x, dtype=float)
        p = self.dimension(x.shape[-1])
        if self.kind is CovarianceKind.IDENTITY:
            return x.copy()
        if self.kind is CovarianceKind.SPECTRUM:
            return x * self.spectrum_at(p) ** exponent
        if exponent == 1.0:
            return x @ self.matrix
        return x @ self._power(p, exponent)

    def solve(self, x: np.ndarray) -> np.ndarray:
        """Sigma^{-1} x for a vector x."""
        x = np.asarray(x, dtype=float)
        if self.kind is not CovarianceKind.DENSE:
            return self.apply(x, -1.0)
        key = ("cho", self.p)
        if key not in self._cache:
            self._cache[key] = scipy.linalg.cho_factor(self.matrix)
        return scipy.linalg.cho_solve(self._cache[key], x)


def _check_eigenvalues(eigs: np.ndarray):
    if not np.all(np.isfinite(eigs)):
        raise InvalidCovariance("eigenvalues must be finite")
    if np.min(eigs) <= 0:
        raise InvalidCovariance(f"covariance must be positive definite (smallest eigenvalue {np.min(eigs):.3g})")
