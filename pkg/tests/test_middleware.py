import pytest
from fastmcp import Client, FastMCP
from fastmcp.exceptions import ToolError
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import SimpleSpanProcessor
from opentelemetry.sdk.trace.export.in_memory_span_exporter import InMemorySpanExporter
from opentelemetry.trace import StatusCode

from opentelemetry_middleware import OpenTelemetryMiddleware


@pytest.fixture
def exporter():
    return InMemorySpanExporter()


@pytest.fixture
def server(exporter):
    provider = TracerProvider()
    provider.add_span_processor(SimpleSpanProcessor(exporter))
    mcp = FastMCP("traced", middleware=[OpenTelemetryMiddleware("test", tracer_provider=provider)])

    @mcp.tool
    def risk(estimator: str, lam: float) -> str:
        if lam < 0:
            raise ValueError("negative penalty")
        if lam == 0:
            return "Error: lambda must be positive"
        return f"{estimator} at {lam}"

    @mcp.resource("resource://defaults")
    def defaults() -> str:
        return "gamma_x = 0.5"

    return mcp


@pytest.mark.anyio
async def test_tool_call_span(server, exporter):
    async with Client(server) as client:
        await client.call_tool("risk", {"estimator": "ridge", "lam": 0.5})
    (span,) = [s for s in exporter.get_finished_spans() if s.name == "tools/call risk"]
    assert span.attributes["gen_ai.tool.name"] == "risk"
    assert span.attributes["refpanel.estimator"] == "ridge"
    assert span.attributes["refpanel.lambda"] == 0.5
    assert span.attributes["mcp.tool.success"] is True
    assert "refpanel.domain_error" not in span.attributes
    assert span.status.status_code is StatusCode.OK


@pytest.mark.anyio
async def test_domain_error_is_flagged(server, exporter):
    async with Client(server) as client:
        await client.call_tool("risk", {"estimator": "ridge", "lam": 0.0})
    (span,) = [s for s in exporter.get_finished_spans() if s.name == "tools/call risk"]
    assert span.attributes["refpanel.domain_error"] is True


@pytest.mark.anyio
async def test_exception_marks_the_span(server, exporter):
    async with Client(server) as client:
        with pytest.raises(ToolError):
            await client.call_tool("risk", {"estimator": "ridge", "lam": -1.0})
    (span,) = [s for s in exporter.get_finished_spans() if s.name == "tools/call risk"]
    assert span.attributes["mcp.tool.success"] is False
    assert span.status.status_code is StatusCode.ERROR


@pytest.mark.anyio
async def test_resource_read_span(server, exporter):
    async with Client(server) as client:
        await client.read_resource("resource://defaults")
    spans = [s for s in exporter.get_finished_spans() if s.name.startswith("resources/read")]
    assert spans[0].attributes["mcp.resource.uri"] == "resource://defaults"
    assert spans[0].attributes["mcp.resource.success"] is True
