import logging
import os

import logfire
from azure.monitor.opentelemetry import configure_azure_monitor
from opentelemetry import metrics, trace
from opentelemetry._logs import set_logger_provider
from opentelemetry.exporter.otlp.proto.grpc._log_exporter import OTLPLogExporter
from opentelemetry.exporter.otlp.proto.grpc.metric_exporter import OTLPMetricExporter
from opentelemetry.exporter.otlp.proto.grpc.trace_exporter import OTLPSpanExporter
from opentelemetry.sdk._logs import LoggerProvider, LoggingHandler
from opentelemetry.sdk._logs.export import BatchLogRecordProcessor
from opentelemetry.sdk.metrics import MeterProvider
from opentelemetry.sdk.metrics.export import PeriodicExportingMetricReader
from opentelemetry.sdk.resources import SERVICE_NAME, Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor

logger = logging.getLogger(__name__)


def configure_otlp(service_name: str, endpoint: str) -> LoggerProvider:
    """Export spans, metrics and log records to the OTLP collector at ``endpoint`` (the Aspire dashboard, say).

    Returns the log provider; its ``force_flush`` pushes buffered records before a short run exits.
    """
    resource = Resource.create({SERVICE_NAME: service_name})
    spans = TracerProvider(resource=resource)
    spans.add_span_processor(BatchSpanProcessor(OTLPSpanExporter(endpoint=endpoint)))
    trace.set_tracer_provider(spans)

    readers = [PeriodicExportingMetricReader(OTLPMetricExporter(endpoint=endpoint))]
    metrics.set_meter_provider(MeterProvider(resource=resource, metric_readers=readers))

    records = LoggerProvider(resource=resource)
    records.add_log_record_processor(BatchLogRecordProcessor(OTLPLogExporter(endpoint=endpoint)))
    set_logger_provider(records)
    _forward_root_logs(records)
    return records


def _forward_root_logs(provider: LoggerProvider):
    root = logging.getLogger()
    # one bridge per process; repeated setup must not duplicate records
    if any(isinstance(handler, LoggingHandler) for handler in root.handlers):
        return
    root.addHandler(LoggingHandler(level=logging.NOTSET, logger_provider=provider))


def configure_tracing(service_name: str = "refpanel") -> str:
    """Pick an exporter from OPENTELEMETRY_PLATFORM and return the platform actually configured.

    Only one platform is set up at a time since each installs its own tracer provider.
    """
    platform = os.getenv("OPENTELEMETRY_PLATFORM", "none").lower()
    if platform == "otlp":
        endpoint = os.getenv("OTEL_EXPORTER_OTLP_ENDPOINT")
        if not endpoint:
            logger.warning("OPENTELEMETRY_PLATFORM=otlp but OTEL_EXPORTER_OTLP_ENDPOINT is unset; tracing disabled")
            return "none"
        logger.info(f"Exporting telemetry to {endpoint}")
        configure_otlp(service_name, endpoint)
        return platform
    if platform == "logfire" and os.getenv("LOGFIRE_TOKEN"):
        logger.info("Setting up Logfire instrumentation")
        logfire.configure(service_name=service_name, send_to_logfire=True)
        return platform
    if platform == "appinsights" and os.getenv("APPLICATIONINSIGHTS_CONNECTION_STRING"):
        logger.info("Setting up Azure Monitor instrumentation")
        configure_azure_monitor()
        return platform
    if platform != "none":
        logger.warning(f"telemetry platform {platform!r} is not configured; tracing disabled")
    return "none"
