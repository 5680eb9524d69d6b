import json

import pytest
from fastmcp import Client

from risk_mcp import MAX_SIMULATION_P, mcp


def _payload(result):
    return json.loads(result.content[0].text)


@pytest.mark.anyio
async def test_lists_the_tools():
    async with Client(mcp) as client:
        names = {tool.name for tool in await client.list_tools()}
    assert names == {"theory_risk", "best_lambda", "ridge_rmt_gap", "calibrate_alpha", "simulate_risk"}


@pytest.mark.anyio
async def test_theory_risk():
    async with Client(mcp) as client:
        result = await client.call_tool("theory_risk", {"estimator": "ref_ridge", "lam": 1.0})
    payload = _payload(result)
    assert payload["estimator"] == "ref_ridge"
    assert 0 < payload["r2"] < 0.6


@pytest.mark.anyio
async def test_domain_errors_come_back_as_text():
    async with Client(mcp) as client:
        result = await client.call_tool("theory_risk", {"estimator": "ridge", "lam": 1.0, "h2": 1.5})
    assert result.content[0].text.startswith("Error:")


@pytest.mark.anyio
async def test_best_lambda_for_ridge():
    async with Client(mcp) as client:
        result = await client.call_tool("best_lambda", {"estimator": "ridge", "lambda_min": 0.01, "lambda_max": 100})
    # gamma (1 - h2) / h2 with the defaults
    assert _payload(result)["best_lambda"] == pytest.approx(0.5 * 0.4 / 0.6, rel=1e-3)


@pytest.mark.anyio
async def test_best_lambda_rejects_bad_bounds():
    async with Client(mcp) as client:
        result = await client.call_tool("best_lambda", {"estimator": "ridge", "lambda_min": 2, "lambda_max": 1})
    assert result.content[0].text.startswith("Error:")


@pytest.mark.anyio
async def test_ridge_rmt_gap():
    async with Client(mcp) as client:
        result = await client.call_tool("ridge_rmt_gap", {"lam": 0.1, "gamma_w": 2.0})
    assert _payload(result)["gap"] < 1e-12


@pytest.mark.anyio
async def test_calibrate_alpha():
    async with Client(mcp) as client:
        result = await client.call_tool("calibrate_alpha", {"lam": 1.0, "gamma_w": 2.0})
    payload = _payload(result)
    assert payload["lambda_roundtrip"] == pytest.approx(1.0, rel=1e-6)
    assert payload["alpha"] > payload["alpha_min"] > 0


@pytest.mark.anyio
async def test_simulate_risk():
    async with Client(mcp) as client:
        result = await client.call_tool("simulate_risk", {"estimator": "ref_ridge", "lam": 1.0, "p": 100, "reps": 3})
    payload = _payload(result)
    assert payload["reps"] == 3
    assert payload["mse_emp"] > 0
    assert payload["mse_theory"] > 0


@pytest.mark.anyio
async def test_simulate_risk_is_limited():
    async with Client(mcp) as client:
        result = await client.call_tool(
            "simulate_risk", {"estimator": "ridge", "lam": 1.0, "p": MAX_SIMULATION_P + 1}
        )
    assert result.content[0].text.startswith("Error:")


@pytest.mark.anyio
async def test_defaults_resource_is_a_valid_config():
    from refpanel.config import spec_from_text

    async with Client(mcp) as client:
        contents = await client.read_resource("resource://defaults")
    spec = spec_from_text(contents[0].text)
    assert spec.gamma_x == 0.5
    assert spec.prior.kappa == 0.05


@pytest.mark.anyio
async def test_prompt_mentions_the_tools():
    async with Client(mcp) as client:
        prompt = await client.get_prompt("compare_estimators_prompt")
    text = prompt.messages[0].content.text
    assert "best_lambda" in text
    assert "simulate_risk" in text
