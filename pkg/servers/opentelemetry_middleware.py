import json
import logging
from contextlib import contextmanager
from typing import Any

from fastmcp.server.middleware import Middleware, MiddlewareContext
from opentelemetry import trace
from opentelemetry.trace import Status, StatusCode, TracerProvider
from opentelemetry.util.types import AttributeValue

logger = logging.getLogger(__name__)

# tool arguments promoted to their own span attributes
PROMOTED_ARGUMENTS = {"estimator": "refpanel.estimator", "lam": "refpanel.lambda", "seed": "refpanel.seed"}


def _arguments_json(arguments: Any) -> str | None:
    if arguments is None:
        return None
    try:
        return json.dumps(arguments, ensure_ascii=False, default=str)
    except (TypeError, ValueError):
        return str(arguments)


def _promoted(arguments: Any) -> dict[str, AttributeValue]:
    if not isinstance(arguments, dict):
        return {}
    out: dict[str, AttributeValue] = {}
    for name, key in PROMOTED_ARGUMENTS.items():
        value = arguments.get(name)
        if isinstance(value, bool | int | float | str):
            out[key] = value
    return out


class OpenTelemetryMiddleware(Middleware):
    """One span per tool call, resource read and prompt retrieval, named "{mcp.method.name} {target}"."""

    def __init__(self, tracer_name: str, tracer_provider: TracerProvider | None = None):
        self.tracer = trace.get_tracer(tracer_name, tracer_provider=tracer_provider)

    @contextmanager
    def _span(self, method: str, target: str | None, kind: str, attributes: dict[str, AttributeValue]):
        name = f"{method} {target}" if target else method
        with self.tracer.start_as_current_span(name, attributes={"mcp.method.name": method, **attributes}) as span:
            try:
                yield span
            except Exception as err:
                span.set_attribute(f"mcp.{kind}.success", False)
                span.set_attribute(f"mcp.{kind}.error", str(err))
                span.set_status(Status(StatusCode.ERROR, str(err)))
                span.record_exception(err)
                raise
            span.set_attribute(f"mcp.{kind}.success", True)
            span.set_status(Status(StatusCode.OK))

    async def on_call_tool(self, context: MiddlewareContext, call_next):
        method = str(getattr(context, "method", "") or "tools/call")
        tool = str(getattr(context.message, "name", "") or "unknown")
        arguments = getattr(context.message, "arguments", None)
        attributes: dict[str, AttributeValue] = {
            "gen_ai.tool.name": tool,
            "gen_ai.operation.name": "execute_tool",
            **_promoted(arguments),
        }
        # opt-in semconv attribute
        encoded = _arguments_json(arguments)
        if encoded is not None:
            attributes["gen_ai.tool.call.arguments"] = encoded
        with self._span(method, tool, "tool", attributes) as span:
            result = await call_next(context)
            # tools report domain failures as "Error: ..." text rather than raising
            if _is_error_text(result):
                span.set_attribute("refpanel.domain_error", True)
            return result

    async def on_read_resource(self, context: MiddlewareContext, call_next):
        method = str(getattr(context, "method", "") or "resources/read")
        uri = str(getattr(context.message, "uri", "") or "")
        with self._span(method, uri or None, "resource", {"mcp.resource.uri": uri or "unknown"}):
            return await call_next(context)

    async def on_get_prompt(self, context: MiddlewareContext, call_next):
        method = str(getattr(context, "method", "") or "prompts/get")
        prompt = str(getattr(context.message, "name", "") or "")
        with self._span(method, prompt or None, "prompt", {"gen_ai.prompt.name": prompt or "unknown"}):
            return await call_next(context)


def _is_error_text(result: Any) -> bool:
    for block in getattr(result, "content", None) or []:
        text = getattr(block, "text", None)
        if isinstance(text, str) and text.startswith("Error:"):
            return True
    return False
