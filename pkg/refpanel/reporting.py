"""CSV artifacts with a provenance comment line."""

import csv
import hashlib
import io
import logging
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path

logger = logging.getLogger(__name__)


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def render_csv(
    columns: Sequence[str], rows: Iterable[Mapping[str, object]], provenance: Mapping[str, object] | None = None
) -> str:
    buf = io.StringIO()
    if provenance:
        buf.write("# " + ", ".join(f"{key}={format_value(value)}" for key, value in provenance.items()) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(col)) for col in columns])
    return buf.getvalue()


def write_csv(
    path: str | Path,
    columns: Sequence[str],
    rows: Iterable[Mapping[str, object]],
    provenance: Mapping[str, object] | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(columns, rows, provenance))
    logger.info(f"wrote {path}")
    return path
