"""Config-driven experiments: theory sweeps, Monte Carlo validation, AMP runs, calibration and figure recipes.

Every mode writes CSV files under the output directory. Numerical failures at individual sweep points leave the
affected cells blank and are counted, so a run can finish its CSV and still report failure.
"""

import itertools
import logging
import math
import threading
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from opentelemetry import trace
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from refpanel import __version__
from refpanel import general_l1, lasso_theory
from refpanel.amp import (
    ridge_se_recursion,
    run_ref_lasso_amp,
    run_ref_ridge_amp,
    se_recursion,
    trajectory_rows,
    write_trajectory_csv,
)
from refpanel.config import parse_float, parse_float_list, read_config, spec_from_mapping
from refpanel.errors import AlphaBelowMin, ConfigParse, NumericalError
from refpanel.lab import EmpiricalRisk, fit_ref_lasso, fit_ref_ridge, generate, monte_carlo_sweep
from refpanel.lasso_theory import best_lambda, correlation_vs_noise, theory_risk
from refpanel.moments import SolverOptions
from refpanel.priors import PriorKind, SignalPrior
from refpanel.reporting import config_hash, write_csv
from refpanel.results import Estimator, Objective, RiskReport
from refpanel.spec import ProblemSpec

logger = logging.getLogger(__name__)
tracer = trace.get_tracer("refpanel.cli")

SWEEP_COLUMNS = (
    "estimator",
    "kappa",
    "h2",
    "gamma_x",
    "gamma_w",
    "lambda",
    "alpha",
    "tau_star",
    "b_star",
    "mse_theory",
    "r2_theory",
    "mse_emp",
    "mse_emp_se",
    "r2_emp",
    "r2_emp_se",
)
CALIBRATION_COLUMNS = ("lambda", "alpha", "zeta_star", "tau_star", "b_star", "lambda_roundtrip", "alpha_min")
CORRELATION_COLUMNS = ("kappa", "alpha", "theta", "correlation")

REFERENCE_P = 461_488
REFERENCE_N = (50_000, 100_000, 200_000)
FIGURE_LAMBDAS = tuple(np.geomspace(0.05, 20.0, 25))
PANEL_SIZES = (10_000, 25_000, 50_000, 100_000, 200_000, 400_000)


class Mode(str, Enum):
    THEORY_SWEEP = "theory-sweep"
    SIMULATE = "simulate"
    AMP_RUN = "amp-run"
    CALIBRATE = "calibrate"
    FIGURE = "figure"


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mode: Mode
    spec: ProblemSpec | None = None
    estimators: list[Estimator] = Field(default_factory=lambda: list(Estimator))
    lambda_grid: list[float] = Field(default_factory=list)
    alpha_grid: list[float] = Field(default_factory=list)
    kappa_grid: list[float] = Field(default_factory=list)
    h2_grid: list[float] = Field(default_factory=list)
    gamma_x_grid: list[float] = Field(default_factory=list)
    gamma_w_grid: list[float] = Field(default_factory=list)
    p: int = Field(2000, ge=50, le=10_000)
    reps: int = Field(20, ge=2)
    seed: int = Field(0, ge=0, lt=2**64)
    jobs: int = Field(1, ge=1)
    t_max: int = Field(30, ge=1)
    p_mc: int = Field(400, ge=1)
    mc_reps: int = Field(100, ge=2)
    figure: str | None = None
    validate_mc: bool = False
    source_text: str = ""

    @field_validator("lambda_grid", "alpha_grid", "kappa_grid", "h2_grid", "gamma_x_grid", "gamma_w_grid")
    @classmethod
    def _increasing(cls, grid: list[float]) -> list[float]:
        if any(not (x > 0 and math.isfinite(x)) for x in grid):
            raise ValueError("grid values must be positive and finite")
        if any(b <= a for a, b in itertools.pairwise(grid)):
            raise ValueError("grid must be strictly increasing")
        return grid

    @model_validator(mode="after")
    def _mode_requirements(self) -> "ExperimentConfig":
        if self.mode is Mode.FIGURE:
            if self.figure not in FIGURES:
                raise ValueError(f"unknown figure {self.figure!r}; choose from {', '.join(FIGURES)}")
            return self
        if self.spec is None:
            raise ValueError(f"mode {self.mode.value} needs a problem spec")
        if not self.lambda_grid:
            raise ValueError("lambda grid is empty")
        if self.kappa_grid and self.spec.prior.kind is not PriorKind.BERNOULLI_GAUSSIAN:
            raise ValueError("kappa_grid needs a Bernoulli-Gaussian prior")
        return self

    @property
    def options(self) -> SolverOptions:
        return SolverOptions(p_mc=self.p_mc, mc_reps=self.mc_reps, seed=self.seed)

    @property
    def provenance(self) -> dict[str, object]:
        return {"config_hash": config_hash(self.source_text), "seed": self.seed, "version": __version__}


def _lambda_grid(values: dict[str, str]) -> list[float]:
    if "lambda_grid" in values:
        return parse_float_list(values, "lambda_grid")
    if "lambda.min" in values or "lambda.max" in values:
        lo, hi = parse_float(values, "lambda.min"), parse_float(values, "lambda.max")
        num = int(parse_float(values, "lambda.num", 25))
        if lo <= 0 or hi <= lo or num < 1:
            raise ConfigParse("lambda.min/max/num must describe a positive increasing log grid")
        return list(np.geomspace(lo, hi, num))
    return []


def experiment_from_mapping(values: dict[str, str], base_dir: Path | None = None, **overrides) -> ExperimentConfig:
    mode = overrides.pop("mode", None) or values.get("mode")
    if mode is None:
        raise ConfigParse("experiment config needs a mode")
    try:
        mode = Mode(mode)
    except ValueError as err:
        raise ConfigParse(f"unknown mode {mode!r}; choose from {', '.join(m.value for m in Mode)}") from err
    data: dict[str, object] = {"mode": mode, "lambda_grid": _lambda_grid(values)}
    if mode is not Mode.FIGURE or "gamma_x" in values:
        data["spec"] = spec_from_mapping(values, base_dir)
    for key in ("alpha_grid", "kappa_grid", "h2_grid", "gamma_x_grid", "gamma_w_grid"):
        if key in values:
            data[key] = parse_float_list(values, key)
    if "estimators" in values:
        data["estimators"] = [item.strip() for item in values["estimators"].split(",") if item.strip()]
    for key in ("p", "reps", "seed", "jobs", "t_max", "p_mc", "mc_reps", "figure"):
        if key in values:
            data[key] = values[key]
    if "validate" in values:
        data["validate_mc"] = values["validate"]
    data.update({key: value for key, value in overrides.items() if value is not None})
    try:
        return ExperimentConfig(**data)
    except ValidationError as err:
        raise ConfigParse(f"invalid experiment config: {err}") from err


def load_experiment(path: str | Path, **overrides) -> ExperimentConfig:
    path = Path(path)
    values = read_config(path)
    text = path.read_text()
    extra = ";".join(f"{key}={value}" for key, value in sorted(overrides.items()) if value is not None)
    return experiment_from_mapping(values, base_dir=path.parent, source_text=text + extra, **overrides)


@dataclass
class RunOutcome:
    paths: list[Path] = field(default_factory=list)
    failures: int = 0


@dataclass(frozen=True)
class _Variant:
    spec: ProblemSpec
    kappa: float | None
    h2: float


def _kappa(prior: SignalPrior) -> float | None:
    return prior.kappa if prior.kind is PriorKind.BERNOULLI_GAUSSIAN else None


def _variants(config: ExperimentConfig) -> list[_Variant]:
    base = config.spec
    kappas = config.kappa_grid or [None]
    h2s = config.h2_grid or [None]
    gxs = config.gamma_x_grid or [base.gamma_x]
    gws = config.gamma_w_grid or [base.gamma_w]
    out = []
    for kappa, h2, gx, gw in itertools.product(kappas, h2s, gxs, gws):
        spec = base.replace(gamma_x=gx, gamma_w=gw)
        if kappa is not None:
            spec = spec.replace(prior=SignalPrior.bernoulli_gaussian(kappa, base.prior.sigma_beta2))
        if h2 is not None:
            spec = spec.replace(h2_x=h2, h2_s=h2)
        out.append(_Variant(spec=spec, kappa=_kappa(spec.prior), h2=spec.h2_x))
    return out


def _row(variant: _Variant, estimator: Estimator, lam: float) -> dict[str, object]:
    return {
        "estimator": estimator.value,
        "kappa": variant.kappa,
        "h2": variant.h2,
        "gamma_x": variant.spec.gamma_x,
        "gamma_w": variant.spec.gamma_w,
        "lambda": lam,
    }


def _fill_theory(row: dict, report: RiskReport):
    row.update(
        alpha=report.alpha,
        tau_star=report.tau_star,
        b_star=report.b_star,
        mse_theory=report.mse,
        r2_theory=report.r2,
    )


def _fill_empirical(row: dict, risk: EmpiricalRisk):
    row.update(mse_emp=risk.mse, mse_emp_se=risk.mse_se, r2_emp=risk.r2, r2_emp_se=risk.r2_se)


class _Counter:
    def __init__(self):
        self.failures = 0
        self._lock = threading.Lock()

    def guard(self, what: str, fn: Callable[[], object]):
        try:
            return fn()
        except NumericalError as err:
            with self._lock:
                self.failures += 1
            logger.warning(f"{what}: {type(err).__name__}: {err}")
            return None


def _theory_point(config, counter, variant, estimator, lam) -> dict[str, object]:
    row = _row(variant, estimator, lam)
    with tracer.start_as_current_span(
        "sweep point", attributes={"estimator": estimator.value, "lambda": lam, "seed": config.seed}
    ):
        report = counter.guard(
            f"{estimator.value} lambda={lam:.6g}", lambda: theory_risk(variant.spec, estimator, lam, config.options)
        )
    if report is not None:
        _fill_theory(row, report)
    return row


def _map(jobs: int, fn, items: Sequence) -> list:
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run_sweep(config: ExperimentConfig, out_dir: Path) -> RunOutcome:
    """Theory curves over every grid combination, with Monte Carlo columns in simulate mode or with validation."""
    counter = _Counter()
    variants = _variants(config)
    points = [
        (variant, estimator, lam)
        for variant in variants
        for estimator in config.estimators
        for lam in config.lambda_grid
    ]
    point_keys = [
        (i, estimator, k)
        for i in range(len(variants))
        for estimator in config.estimators
        for k in range(len(config.lambda_grid))
    ]
    logger.info(f"evaluating {len(points)} sweep points with {config.jobs} worker(s)")
    rows = _map(config.jobs, lambda point: _theory_point(config, counter, *point), points)

    if config.mode is Mode.SIMULATE or config.validate_mc:
        by_key = {(i, e, k): row for (i, e, k), row in zip(point_keys, rows)}
        for i, variant in enumerate(variants):
            for estimator in config.estimators:
                risks = counter.guard(
                    f"{estimator.value} simulation",
                    lambda: monte_carlo_sweep(
                        variant.spec, config.p, config.lambda_grid, estimator, config.reps, config.seed, config.jobs
                    ),
                )
                for k, risk in enumerate(risks or []):
                    _fill_empirical(by_key[(i, estimator, k)], risk)

    name = "simulate.csv" if config.mode is Mode.SIMULATE else "theory_sweep.csv"
    path = write_csv(out_dir / name, SWEEP_COLUMNS, rows, config.provenance)
    return RunOutcome(paths=[path], failures=counter.failures)


def _calibration_row(config: ExperimentConfig, counter: _Counter, lam: float) -> dict[str, object]:
    spec, opts = config.spec, config.options
    row: dict[str, object] = {"lambda": lam}

    def scalar():
        fp = lasso_theory.solve_ref_lasso_se(spec, lam, opts)
        _, back = lasso_theory.ref_lasso_at_alpha(spec, fp.alpha, opts)
        return fp, back, lasso_theory.ref_alpha_min(spec)

    def general():
        sample = general_l1.monte_carlo_sample(spec, config.p_mc, config.mc_reps, opts.seed)
        fp = general_l1.solve_general_l1_se(spec, lam, sample=sample)
        back = general_l1.lambda_of_alpha(spec, fp.alpha, sample=sample)
        return fp, back, general_l1.alpha_min(spec, sample=sample)

    result = counter.guard(f"calibration lambda={lam:.6g}", scalar if spec.covariance.is_identity else general)
    if result is not None:
        fp, back, amin = result
        row.update(
            alpha=fp.alpha,
            zeta_star=fp.zeta_star,
            tau_star=fp.tau_star,
            b_star=fp.b_star,
            lambda_roundtrip=back,
            alpha_min=amin,
        )
    return row


def run_calibration(config: ExperimentConfig, out_dir: Path) -> RunOutcome:
    counter = _Counter()
    rows = _map(config.jobs, lambda lam: _calibration_row(config, counter, lam), config.lambda_grid)
    path = write_csv(out_dir / "calibrate.csv", CALIBRATION_COLUMNS, rows, config.provenance)
    return RunOutcome(paths=[path], failures=counter.failures)


def run_amp(config: ExperimentConfig, out_dir: Path) -> RunOutcome:
    """AMP trajectories on one synthetic dataset, against the state evolution and the convex solution."""
    counter = _Counter()
    outcome = RunOutcome()
    spec = config.spec
    dataset = generate(spec, config.p, config.seed)
    opts = config.options
    runners = {
        Estimator.REF_LASSO: (
            run_ref_lasso_amp,
            fit_ref_lasso,
            lambda lam: se_recursion(spec, lam, config.t_max, opts=opts),
        ),
        Estimator.REF_RIDGE: (
            run_ref_ridge_amp,
            fit_ref_ridge,
            lambda lam: ridge_se_recursion(spec, lam, config.t_max),
        ),
    }
    for estimator in config.estimators:
        if estimator not in runners:
            logger.info(f"no AMP recursion for {estimator.value}; skipped")
            continue
        run, solve, evolve = runners[estimator]
        for i, lam in enumerate(config.lambda_grid):
            with tracer.start_as_current_span(
                "amp run", attributes={"estimator": estimator.value, "lambda": lam, "seed": config.seed}
            ):
                states = counter.guard(
                    f"{estimator.value} AMP lambda={lam:.6g}",
                    lambda: run(dataset, lam, config.t_max, on_divergence="stop"),
                )
                if states is None:
                    continue
                target = counter.guard(f"{estimator.value} fit lambda={lam:.6g}", lambda: solve(dataset, lam))
                se = counter.guard(f"{estimator.value} state evolution lambda={lam:.6g}", lambda: evolve(lam))
            rows = trajectory_rows(states, dataset, estimator_beta=target, se=se)
            path = out_dir / f"amp_{estimator.value}_{i:02d}.csv"
            outcome.paths.append(write_trajectory_csv(path, rows, {**config.provenance, "lambda": lam}))
    outcome.failures = counter.failures
    return outcome


# figure recipes: theory scale at the reference dimensions


def _reference_spec(kappa: float, h2: float, n_x: int, n_w: int) -> ProblemSpec:
    return ProblemSpec(
        gamma_x=REFERENCE_P / n_x,
        gamma_w=REFERENCE_P / n_w,
        gamma_s=REFERENCE_P / n_x,
        h2_x=h2,
        h2_s=h2,
        prior=SignalPrior.bernoulli_gaussian(kappa),
    )


def _best_r2_rows(counter, specs: Iterable[tuple[float, float, ProblemSpec]], estimators, grid) -> list[dict]:
    rows = []
    for kappa, h2, spec in specs:
        variant = _Variant(spec=spec, kappa=kappa, h2=h2)
        for estimator in estimators:
            found = counter.guard(
                f"best lambda {estimator.value} kappa={kappa} h2={h2}",
                lambda: best_lambda(spec, estimator, Objective.MAX_R2, grid),
            )
            row = _row(variant, estimator, found[0] if found else None)
            if found:
                _fill_theory(row, found[1])
            rows.append(row)
    return rows


def _figure_sparsity_heritability(config, counter):
    specs = [
        (kappa, h2, _reference_spec(kappa, h2, n, n))
        for n in REFERENCE_N
        for kappa in (0.001, 0.005, 0.01, 0.05)
        for h2 in (0.1, 0.3, 0.6, 0.9)
    ]
    return SWEEP_COLUMNS, _best_r2_rows(counter, specs, (Estimator.LASSO, Estimator.REF_LASSO), FIGURE_LAMBDAS)


def _figure_panel_size(config, counter):
    n_x = REFERENCE_N[1]
    rows = []
    for kappa in (0.001, 0.01):
        plain = [(kappa, 0.3, _reference_spec(kappa, 0.3, n_x, n_x))]
        rows += _best_r2_rows(counter, plain, [Estimator.LASSO], FIGURE_LAMBDAS)
        panels = [(kappa, 0.3, _reference_spec(kappa, 0.3, n_x, n_w)) for n_w in PANEL_SIZES]
        rows += _best_r2_rows(counter, panels, [Estimator.REF_LASSO], FIGURE_LAMBDAS)
    return SWEEP_COLUMNS, rows


def _path_rows(config, counter, estimators, kappa, h2) -> list[dict]:
    rows = []
    for n in REFERENCE_N:
        spec = _reference_spec(kappa, h2, n, n)
        variant = _Variant(spec=spec, kappa=kappa, h2=h2)
        for estimator in estimators:
            for lam in FIGURE_LAMBDAS:
                row = _row(variant, estimator, float(lam))
                report = counter.guard(
                    f"{estimator.value} n={n} lambda={lam:.4g}", lambda: theory_risk(spec, estimator, float(lam))
                )
                if report is not None:
                    _fill_theory(row, report)
                rows.append(row)
            if config.validate_mc:
                # same aspect ratios at desk scale
                risks = counter.guard(
                    f"{estimator.value} validation n={n}",
                    lambda: monte_carlo_sweep(
                        spec, config.p, FIGURE_LAMBDAS, estimator, config.reps, config.seed, config.jobs
                    ),
                )
                for row, risk in zip(rows[-len(FIGURE_LAMBDAS) :], risks or []):
                    _fill_empirical(row, risk)
    return rows


def _figure_lambda_path(config, counter):
    return SWEEP_COLUMNS, _path_rows(config, counter, [Estimator.REF_LASSO], 0.005, 0.6)


def _figure_ridge_lambda_path(config, counter):
    return SWEEP_COLUMNS, _path_rows(config, counter, [Estimator.RIDGE, Estimator.REF_RIDGE], 0.005, 0.6)


def _figure_alpha_path(config, counter):
    alphas = config.alpha_grid or np.linspace(0.25, 4.0, 16)
    rows = []
    for kappa in (0.001, 0.005, 0.05):
        for n in REFERENCE_N:
            spec = _reference_spec(kappa, 0.6, n, n)
            variant = _Variant(spec=spec, kappa=kappa, h2=0.6)
            solvers = {
                Estimator.LASSO: (lasso_theory.lasso_at_alpha, lasso_theory.lasso_risk),
                Estimator.REF_LASSO: (lasso_theory.ref_lasso_at_alpha, lasso_theory.ref_lasso_risk),
            }
            for estimator, (at_alpha, risk) in solvers.items():
                for alpha in alphas:
                    try:
                        fp, lam = at_alpha(spec, float(alpha))
                    except AlphaBelowMin:
                        logger.debug(f"{estimator.value}: alpha={alpha:.3g} below alpha_min, skipped")
                        continue
                    row = _row(variant, estimator, lam)
                    report = counter.guard(f"{estimator.value} alpha={alpha:.3g}", lambda: risk(spec, lam, fp))
                    if report is not None:
                        _fill_theory(row, report)
                    rows.append(row)
    return SWEEP_COLUMNS, rows


def _figure_correlation(config, counter):
    rows = []
    for kappa in (0.05, 0.95):
        prior = SignalPrior.bernoulli_gaussian(kappa)
        for alpha in (0.05, 1.0, 3.0):
            for theta in np.geomspace(0.05, 5.0, 25):
                corr = counter.guard(f"correlation kappa={kappa}", lambda: correlation_vs_noise(prior, alpha, theta))
                rows.append({"kappa": kappa, "alpha": alpha, "theta": float(theta), "correlation": corr})
    return CORRELATION_COLUMNS, rows


FIGURES: dict[str, Callable] = {
    "sparsity-heritability": _figure_sparsity_heritability,
    "panel-size": _figure_panel_size,
    "lambda-path": _figure_lambda_path,
    "alpha-path": _figure_alpha_path,
    "correlation-vs-noise": _figure_correlation,
    "ridge-lambda-path": _figure_ridge_lambda_path,
}


def run_figure(config: ExperimentConfig, out_dir: Path) -> RunOutcome:
    counter = _Counter()
    logger.info(f"figure recipe {config.figure}")
    columns, rows = FIGURES[config.figure](config, counter)
    path = write_csv(out_dir / f"figure_{config.figure}.csv", columns, rows, config.provenance)
    return RunOutcome(paths=[path], failures=counter.failures)


def run(config: ExperimentConfig, out_dir: str | Path) -> RunOutcome:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with tracer.start_as_current_span(config.mode.value, attributes={"seed": config.seed}):
        match config.mode:
            case Mode.THEORY_SWEEP | Mode.SIMULATE:
                outcome = run_sweep(config, out_dir)
            case Mode.CALIBRATE:
                outcome = run_calibration(config, out_dir)
            case Mode.AMP_RUN:
                outcome = run_amp(config, out_dir)
            case Mode.FIGURE:
                outcome = run_figure(config, out_dir)
    if outcome.failures:
        logger.warning(f"{outcome.failures} point(s) failed; see the warnings above")
    return outcome
