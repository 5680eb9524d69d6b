"""Run with: uv run servers/risk_mcp.py  (MCP_TRANSPORT=http for streamable HTTP on MCP_PORT)"""

import logging
import os
from enum import Enum
from typing import Annotated

import anyio
import numpy as np
from dotenv import load_dotenv
from fastmcp import FastMCP
from fastmcp.server.middleware import Middleware

from opentelemetry_middleware import OpenTelemetryMiddleware
from refpanel import lasso_theory, ridge_theory
from refpanel.config import dump_problem_spec
from refpanel.errors import RiskError
from refpanel.lab import monte_carlo
from refpanel.priors import SignalPrior
from refpanel.results import Estimator, Objective
from refpanel.spec import ProblemSpec
from refpanel.telemetry import configure_tracing

RUNNING_IN_PRODUCTION = os.getenv("RUNNING_IN_PRODUCTION", "false").lower() == "true"

if not RUNNING_IN_PRODUCTION:
    load_dotenv(override=True)

logging.basicConfig(level=logging.WARNING, format="%(asctime)s - %(message)s")
logger = logging.getLogger("RiskMCP")
logger.setLevel(logging.INFO)

middleware: list[Middleware] = []
if configure_tracing(service_name="refpanel-mcp") != "none":
    middleware = [OpenTelemetryMiddleware(tracer_name="refpanel.mcp")]

MAX_SIMULATION_P = 2000
MAX_SIMULATION_REPS = 100

DEFAULT_SPEC = ProblemSpec(
    gamma_x=0.5, gamma_w=0.5, gamma_s=0.5, h2_x=0.6, h2_s=0.6, prior=SignalPrior.bernoulli_gaussian(0.05)
)

mcp = FastMCP("Reference Panel Risk", middleware=middleware)


class Transport(Enum):
    STDIO = "stdio"
    HTTP = "http"


def _spec(gamma_x: float, gamma_w: float | None, h2: float, kappa: float) -> ProblemSpec:
    return ProblemSpec(
        gamma_x=gamma_x,
        gamma_w=gamma_x if gamma_w is None else gamma_w,
        gamma_s=gamma_x,
        h2_x=h2,
        h2_s=h2,
        prior=SignalPrior.bernoulli_gaussian(kappa),
    )


GammaX = Annotated[float, "Aspect ratio p / n_x of the training sample"]
GammaW = Annotated[float | None, "Aspect ratio p / n_w of the reference panel (defaults to gamma_x)"]
Heritability = Annotated[float, "Heritability h^2 in (0, 1), shared by training and test samples"]
Kappa = Annotated[float, "Fraction of nonzero effects in the Bernoulli-Gaussian prior"]


@mcp.tool
async def theory_risk(
    estimator: Annotated[Estimator, "Estimator: lasso, ref_lasso, ridge or ref_ridge"],
    lam: Annotated[float, "Penalty lambda (positive)"],
    gamma_x: GammaX = 0.5,
    gamma_w: GammaW = None,
    h2: Heritability = 0.6,
    kappa: Kappa = 0.05,
):
    """Asymptotic out-of-sample MSE and R^2 of an estimator at one penalty, with its fixed point."""
    logger.info(f"theory_risk {estimator.value} lambda={lam}")
    try:
        report = lasso_theory.theory_risk(_spec(gamma_x, gamma_w, h2, kappa), estimator, lam)
    except RiskError as e:
        logger.error(f"theory_risk failed: {type(e).__name__}: {e}")
        return f"Error: {e}"
    return report.as_dict()


@mcp.tool
async def best_lambda(
    estimator: Annotated[Estimator, "Estimator: lasso, ref_lasso, ridge or ref_ridge"],
    objective: Annotated[Objective, "min_mse or max_r2"] = Objective.MAX_R2,
    lambda_min: Annotated[float, "Smallest penalty of the log grid"] = 0.05,
    lambda_max: Annotated[float, "Largest penalty of the log grid"] = 20.0,
    num: Annotated[int, "Number of grid points"] = 25,
    gamma_x: GammaX = 0.5,
    gamma_w: GammaW = None,
    h2: Heritability = 0.6,
    kappa: Kappa = 0.05,
):
    """Penalty optimising the objective on a log grid, refined between grid neighbours."""
    if not 0 < lambda_min < lambda_max or num < 2:
        return "Error: need 0 < lambda_min < lambda_max and at least 2 grid points"
    grid = np.geomspace(lambda_min, lambda_max, num)
    try:
        lam, report = lasso_theory.best_lambda(_spec(gamma_x, gamma_w, h2, kappa), estimator, objective, grid)
    except RiskError as e:
        logger.error(f"best_lambda failed: {type(e).__name__}: {e}")
        return f"Error: {e}"
    return {"best_lambda": lam, **report.as_dict()}


@mcp.tool
async def ridge_rmt_gap(
    lam: Annotated[float, "Ridge penalty lambda"],
    gamma_w: Annotated[float, "Aspect ratio p / n_w of the reference panel"],
):
    """Discrepancy between the AMP and random-matrix forms of the panel ridge penalty (zero up to rounding)."""
    try:
        return {"lambda": lam, "gamma_w": gamma_w, "gap": ridge_theory.rmt_equivalence_gap(lam, gamma_w)}
    except RiskError as e:
        logger.error(f"ridge_rmt_gap failed: {e}")
        return f"Error: {e}"


@mcp.tool
async def calibrate_alpha(
    lam: Annotated[float, "Penalty lambda of the reference-panel lasso"],
    gamma_x: GammaX = 0.5,
    gamma_w: GammaW = None,
    h2: Heritability = 0.6,
    kappa: Kappa = 0.05,
):
    """Threshold ratio alpha(lambda) of the reference-panel lasso and the state-evolution fixed point behind it."""
    try:
        spec = _spec(gamma_x, gamma_w, h2, kappa)
        fp = lasso_theory.solve_ref_lasso_se(spec, lam)
        _, roundtrip = lasso_theory.ref_lasso_at_alpha(spec, fp.alpha)
        alpha_min = lasso_theory.ref_alpha_min(spec)
    except RiskError as e:
        logger.error(f"calibrate_alpha failed: {type(e).__name__}: {e}")
        return f"Error: {e}"
    return {
        "lambda": lam,
        "alpha": fp.alpha,
        "zeta_star": fp.zeta_star,
        "tau_star": fp.tau_star,
        "b_star": fp.b_star,
        "lambda_roundtrip": roundtrip,
        "alpha_min": alpha_min,
    }


@mcp.tool
async def simulate_risk(
    estimator: Annotated[Estimator, "Estimator: lasso, ref_lasso, ridge or ref_ridge"],
    lam: Annotated[float, "Penalty lambda (positive)"],
    p: Annotated[int, "Number of predictors of the synthetic datasets"] = 500,
    reps: Annotated[int, "Number of independent replicates"] = 10,
    seed: Annotated[int, "Master seed"] = 0,
    gamma_x: GammaX = 0.5,
    gamma_w: GammaW = None,
    h2: Heritability = 0.6,
    kappa: Kappa = 0.05,
):
    """Monte Carlo estimate of MSE and R^2 on synthetic data next to the theory prediction."""
    if p > MAX_SIMULATION_P or reps > MAX_SIMULATION_REPS:
        return f"Error: simulations are limited to p <= {MAX_SIMULATION_P} and reps <= {MAX_SIMULATION_REPS}"
    logger.info(f"simulate_risk {estimator.value} lambda={lam} p={p} reps={reps} seed={seed}")
    try:
        spec = _spec(gamma_x, gamma_w, h2, kappa)
        risk = await anyio.to_thread.run_sync(lambda: monte_carlo(spec, p, lam, estimator, reps, seed))
        theory = lasso_theory.theory_risk(spec, estimator, lam)
    except RiskError as e:
        logger.error(f"simulate_risk failed: {type(e).__name__}: {e}")
        return f"Error: {e}"
    return {
        "estimator": estimator.value,
        "lambda": lam,
        "reps": risk.reps,
        "mse_emp": risk.mse,
        "mse_emp_se": risk.mse_se,
        "r2_emp": risk.r2,
        "r2_emp_se": risk.r2_se,
        "mse_theory": theory.mse,
        "r2_theory": theory.r2,
    }


@mcp.resource("resource://defaults")
async def get_defaults():
    """Default problem config, in the key = value format the CLI reads."""
    logger.info("Defaults accessed")
    return dump_problem_spec(DEFAULT_SPEC)


@mcp.prompt
def compare_estimators_prompt(gamma: float = 0.5, h2: float = 0.6, kappa: float = 0.05) -> str:
    """Generate a prompt comparing the four estimators in one regime."""
    return f"""
    Compare the lasso, reference-panel lasso, ridge and reference-panel ridge at
    gamma_x = gamma_w = {gamma}, h2 = {h2} and a Bernoulli-Gaussian prior with kappa = {kappa}:

    1. Use best_lambda to find each estimator's R^2-optimal penalty
    2. Report the optimal R^2 and MSE of each estimator
    3. Say how much is lost by fitting with the reference panel instead of the training genotypes
    4. Check one penalty with simulate_risk and state whether theory and simulation agree

    Keep the answer to a short table and two or three sentences.
    """


if __name__ == "__main__":
    transport = Transport(os.getenv("MCP_TRANSPORT", "stdio").lower())
    if transport is Transport.HTTP:
        port = int(os.getenv("MCP_PORT", "8000"))
        logger.info(f"Reference panel risk MCP server starting (HTTP mode on port {port})")
        mcp.run(transport="streamable-http", host="0.0.0.0", port=port)
    else:
        mcp.run()
