"""Plain-text ``key = value`` problem files.

Parsing is delegated to python-dotenv, which already handles comments, blank lines, quoting and
whitespace around ``=``; dotted keys such as ``prior.kind`` are kept verbatim.
"""

import io
import logging
import os
from collections.abc import Mapping
from pathlib import Path

import numpy as np
from dotenv import dotenv_values

from refpanel.covariance import CovarianceKind, CovarianceModel
from refpanel.errors import ConfigParse, RiskError
from refpanel.priors import PriorKind, SignalPrior
from refpanel.spec import ProblemSpec

logger = logging.getLogger(__name__)

SPEC_KEYS = ("gamma_x", "gamma_w", "gamma_s", "h2_x", "h2_s")

_PRIOR_ALIASES = {
    "bernoulli_gaussian": PriorKind.BERNOULLI_GAUSSIAN,
    "bernoulligaussian": PriorKind.BERNOULLI_GAUSSIAN,
    "discrete": PriorKind.DISCRETE_MIXTURE,
    "discrete_mixture": PriorKind.DISCRETE_MIXTURE,
    "discretemixture": PriorKind.DISCRETE_MIXTURE,
    "gaussian_mixture": PriorKind.GAUSSIAN_MIXTURE,
    "gaussianmixture": PriorKind.GAUSSIAN_MIXTURE,
}

_COVARIANCE_ALIASES = {
    "identity": CovarianceKind.IDENTITY,
    "spectrum": CovarianceKind.SPECTRUM,
    "dense": CovarianceKind.DENSE,
    "densespd": CovarianceKind.DENSE,
    "dense_spd": CovarianceKind.DENSE,
}


def read_config(path: str | os.PathLike) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return _clean(dotenv_values(path, interpolate=False))


def parse_config_text(text: str) -> dict[str, str]:
    return _clean(dotenv_values(stream=io.StringIO(text), interpolate=False))


def _clean(raw: Mapping[str, str | None]) -> dict[str, str]:
    values = {}
    for key, value in raw.items():
        if value is None or not value.strip():
            raise ConfigParse(f"key '{key}' has no value")
        values[key.strip()] = value.strip()
    return values


def parse_float(values: Mapping[str, str], key: str, default: float | None = None) -> float:
    if key not in values:
        if default is None:
            raise ConfigParse(f"missing required key '{key}'")
        return default
    try:
        return float(values[key])
    except ValueError as e:
        raise ConfigParse(f"key '{key}': expected a number, got '{values[key]}'") from e


def parse_float_list(values: Mapping[str, str], key: str) -> list[float]:
    try:
        return [float(item) for item in values[key].split(",") if item.strip()]
    except ValueError as e:
        raise ConfigParse(f"key '{key}': expected a comma-separated list of numbers") from e


def _parse_tuples(values: Mapping[str, str], key: str, width: int) -> list[tuple[float, ...]]:
    items = []
    for chunk in values[key].split(","):
        if not chunk.strip():
            continue
        parts = chunk.split(":")
        if len(parts) != width:
            raise ConfigParse(f"key '{key}': entry '{chunk.strip()}' must have {width} ':'-separated fields")
        try:
            items.append(tuple(float(x) for x in parts))
        except ValueError as e:
            raise ConfigParse(f"key '{key}': entry '{chunk.strip()}' is not numeric") from e
    if not items:
        raise ConfigParse(f"key '{key}' is empty")
    return items


def prior_from_mapping(values: Mapping[str, str]) -> SignalPrior:
    kind_text = values.get("prior.kind", "bernoulli_gaussian").lower()
    kind = _PRIOR_ALIASES.get(kind_text)
    if kind is None:
        raise ConfigParse(f"unknown prior.kind '{kind_text}'")
    if kind is PriorKind.BERNOULLI_GAUSSIAN:
        return SignalPrior.bernoulli_gaussian(
            parse_float(values, "prior.kappa"), parse_float(values, "prior.sigma_beta2", 1.0)
        )
    if kind is PriorKind.DISCRETE_MIXTURE:
        if "prior.atoms" not in values:
            raise ConfigParse("discrete prior needs prior.atoms = value:weight, ...")
        return SignalPrior.discrete(_parse_tuples(values, "prior.atoms", 2))
    if "prior.components" not in values:
        raise ConfigParse("gaussian mixture prior needs prior.components = weight:mean:variance, ...")
    return SignalPrior.gaussian_mixture(_parse_tuples(values, "prior.components", 3))


def covariance_from_mapping(values: Mapping[str, str], base_dir: Path | None = None) -> CovarianceModel:
    kind_text = values.get("covariance.kind", "identity").lower()
    kind = _COVARIANCE_ALIASES.get(kind_text)
    if kind is None:
        raise ConfigParse(f"unknown covariance.kind '{kind_text}'")
    if kind is CovarianceKind.IDENTITY:
        p = values.get("covariance.p")
        return CovarianceModel.identity(int(parse_float(values, "covariance.p")) if p else None)
    if kind is CovarianceKind.SPECTRUM:
        if "covariance.eigenvalues" not in values:
            raise ConfigParse("spectrum covariance needs covariance.eigenvalues")
        return CovarianceModel.spectrum(parse_float_list(values, "covariance.eigenvalues"))
    if "covariance.ar1" in values:
        return CovarianceModel.ar1(int(parse_float(values, "covariance.p")), parse_float(values, "covariance.ar1"))
    if "covariance.matrix" not in values:
        raise ConfigParse("dense covariance needs covariance.matrix = path.npy or covariance.ar1 with covariance.p")
    matrix_path = Path(values["covariance.matrix"])
    if base_dir is not None and not matrix_path.is_absolute():
        matrix_path = base_dir / matrix_path
    try:
        matrix = np.load(matrix_path)
    except (OSError, ValueError) as e:
        raise ConfigParse(f"cannot load covariance.matrix from {matrix_path}: {e}") from e
    return CovarianceModel.dense(matrix)


def spec_from_mapping(values: Mapping[str, str], base_dir: Path | None = None) -> ProblemSpec:
    numbers = {key: parse_float(values, key) for key in SPEC_KEYS if key != "gamma_s" and key != "h2_s"}
    numbers["gamma_s"] = parse_float(values, "gamma_s", numbers["gamma_x"])
    numbers["h2_s"] = parse_float(values, "h2_s", numbers["h2_x"])
    return ProblemSpec(
        prior=prior_from_mapping(values),
        covariance=covariance_from_mapping(values, base_dir),
        **numbers,
    )


def load_problem_spec(path: str | os.PathLike) -> ProblemSpec:
    path = Path(path)
    values = read_config(path)
    logger.debug(f"Loaded {len(values)} keys from {path}")
    return spec_from_mapping(values, base_dir=path.parent)


def spec_from_text(text: str) -> ProblemSpec:
    return spec_from_mapping(parse_config_text(text))


def dump_problem_spec(spec: ProblemSpec) -> str:
    """Serialize a spec back to the config format. Dense matrices other than AR(1) cannot be inlined."""
    lines = [f"{key} = {_num(getattr(spec, key))}" for key in SPEC_KEYS]
    prior = spec.prior
    lines.append(f"prior.kind = {prior.kind.value}")
    if prior.kind is PriorKind.BERNOULLI_GAUSSIAN:
        lines.append(f"prior.kappa = {_num(prior.kappa)}")
        lines.append(f"prior.sigma_beta2 = {_num(prior.sigma_beta2)}")
    elif prior.kind is PriorKind.DISCRETE_MIXTURE:
        atoms = ", ".join(f"{_num(c.mean)}:{_num(c.weight)}" for c in prior.components)
        lines.append(f"prior.atoms = {atoms}")
    else:
        parts = ", ".join(f"{_num(c.weight)}:{_num(c.mean)}:{_num(c.variance)}" for c in prior.components)
        lines.append(f"prior.components = {parts}")
    cov = spec.covariance
    lines.append(f"covariance.kind = {cov.kind.value}")
    if cov.kind is CovarianceKind.IDENTITY and cov.p is not None:
        lines.append(f"covariance.p = {cov.p}")
    elif cov.kind is CovarianceKind.SPECTRUM:
        lines.append("covariance.eigenvalues = " + ", ".join(_num(x) for x in cov.eigenvalues))
    elif cov.kind is CovarianceKind.DENSE:
        rho = float(cov.matrix[0, 1]) if cov.p > 1 else 0.0
        try:
            is_ar1 = np.allclose(cov.matrix, CovarianceModel.ar1(cov.p, rho).matrix, rtol=0, atol=1e-14)
        except RiskError:
            is_ar1 = False
        if not is_ar1:
            raise ConfigParse("only AR(1) dense covariances can be written inline; save the matrix to .npy")
        lines.append(f"covariance.p = {cov.p}")
        lines.append(f"covariance.ar1 = {_num(rho)}")
    return "\n".join(lines) + "\n"


def _num(x: float) -> str:
    return repr(float(x))
