"""
Self-describing JSON and CSV reports
"""

from dataclasses import dataclass, field, asdict, is_dataclass
from typing import Any, Dict, List, Optional
import json
import logging
import math
import os

import pandas as pd

from src.core.errors import InvalidInputError, ReportWriteError, UnreadableFileError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FORMATS = ("json", "csv")


@dataclass
class ReportDocument:
    """
    One report: the config it came from plus flat records

    runtime_ms stays None unless timings were requested, so reruns with the
    same config produce identical files.
    """
    kind: str
    config: Dict[str, Any]
    records: List[Dict[str, Any]] = field(default_factory=list)
    runtime_ms: Optional[float] = None
    versions: Dict[str, str] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_records(cls, kind: str, config: Dict[str, Any], records: List[Any], **kwargs) -> "ReportDocument":
        rows = [asdict(r) if is_dataclass(r) else dict(r) for r in records]
        return cls(kind=kind, config=config, records=rows, **kwargs)

    def to_dict(self) -> Dict[str, Any]:
        return _clean({
            "schema_version": self.schema_version,
            "kind": self.kind,
            "config": self.config,
            "records": self.records,
            "runtime_ms": self.runtime_ms,
            "versions": self.versions,
        })


def _clean(value: Any) -> Any:
    # JSON has no NaN/inf; numpy scalars and tuples are normalized too
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_report(report: ReportDocument, path: str, fmt: str = "json") -> None:
    """
    Write a report

    JSON keeps the nesting. CSV has one row per record with nested fields
    flattened to dotted columns, schema_version/kind as leading columns and
    the config repeated on every row as config.* columns (lists as JSON text).

    Args:
        report: document to write
        path: destination file
        fmt: "json" or "csv"
    """
    if fmt not in FORMATS:
        raise InvalidInputError(f"report format must be one of {FORMATS}, got '{fmt}'")
    doc = report.to_dict()
    try:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        if fmt == "json":
            with open(path, "w", encoding="utf-8") as f:
                json.dump(doc, f, indent=2, sort_keys=True, allow_nan=False)
                f.write("\n")
        else:
            frame = pd.json_normalize(doc["records"]) if doc["records"] else pd.DataFrame()
            frame.insert(0, "kind", report.kind)
            frame.insert(0, "schema_version", report.schema_version)
            config = pd.json_normalize({"config": doc["config"]})
            for column in config.columns:
                value = config.at[0, column]
                frame[column] = json.dumps(value) if isinstance(value, (list, dict)) else value
            frame.to_csv(path, index=False, lineterminator="\n")
    except (OSError, TypeError, ValueError) as e:
        logger.error(f"Failed to write report to {path}: {e}")
        raise ReportWriteError(f"cannot write report {path}: {e}") from e
    logger.info(f"Wrote {report.kind} report with {len(report.records)} records to {path}")


def read_report(path: str) -> Dict[str, Any]:
    """Parse a JSON report back into a dict"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, ValueError) as e:
        raise UnreadableFileError(f"cannot read report {path}: {e}") from e
