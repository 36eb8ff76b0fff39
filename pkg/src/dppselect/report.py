"""Selection reports: schema, JSON/CSV emission, provenance."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import jsonschema

REPORT_SCHEMA_VERSION = "1"

REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": [
        "schema_version",
        "method",
        "seed",
        "selected",
        "n_items",
        "config",
        "created_at",
    ],
    "properties": {
        "schema_version": {"const": REPORT_SCHEMA_VERSION},
        "method": {"type": "string"},
        "seed": {"type": "integer"},
        "selected": {
            "type": "array",
            "items": {"type": "integer", "minimum": 0},
        },
        "n_items": {"type": "integer", "minimum": 1},
        "inclusion_marginals": {
            "type": ["array", "null"],
            "items": {"type": "number"},
        },
        "diversity_logdet": {"type": ["number", "null"]},
        "mean_pairwise_distance": {"type": ["number", "null"]},
        "predictive_mse": {"type": ["number", "null"]},
        "alternatives": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["indices", "log_prob"],
                "properties": {
                    "indices": {"type": "array", "items": {"type": "integer"}},
                    "log_prob": {"type": ["number", "null"]},
                },
                "additionalProperties": False,
            },
        },
        "credible": {"type": ["object", "null"]},
        "config": {"type": "object"},
        "column_names": {
            "type": ["array", "null"],
            "items": {"type": "string"},
        },
        "diagnostics": {"type": ["object", "null"]},
        "created_at": {"type": "string"},
    },
    "additionalProperties": False,
}


@dataclass
class SelectionReport:
    """Everything a selection run reports, ready for JSON emission."""

    method: str
    selected: tuple[int, ...]
    n_items: int
    seed: int
    config: dict
    inclusion_marginals: list[float] | None = None
    diversity_logdet: float | None = None
    mean_pairwise_distance: float | None = None
    predictive_mse: float | None = None
    alternatives: list[dict] = field(default_factory=list)
    credible: dict | None = None
    column_names: list[str] | None = None
    diagnostics: dict | None = None
    created_at: str = ""
    schema_version: str = REPORT_SCHEMA_VERSION

    def __post_init__(self):
        if not self.created_at:
            self.created_at = datetime.now(timezone.utc).isoformat()

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["selected"] = [int(i) for i in self.selected]
        return _clean(payload)


def _clean(value):
    """Make a payload strictly JSON-serializable: non-finite floats -> null."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if hasattr(value, "item"):  # numpy scalar
        return _clean(value.item())
    return value


def validate_report(payload: dict) -> None:
    jsonschema.validate(payload, REPORT_SCHEMA)


def write_report(report: SelectionReport, path) -> dict:
    payload = report.to_dict()
    validate_report(payload)
    write_json(payload, path)
    return payload


def write_json(payload: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_clean(payload), sort_keys=True, indent=2)
    path.write_text(text + "\n", encoding="utf-8")


def write_csv(path, fieldnames: list[str], rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def load_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
