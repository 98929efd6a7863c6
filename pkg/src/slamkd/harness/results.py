"""Run results and their on-disk form.

A result is written as one JSON document plus a flat CSV of curves with
columns ``trial, method, step, metric, value``. Floats go through ``repr``
(via ``json``), so a write/read round trip is exact.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = "slamkd-result/1"
CURVE_COLUMNS = ("trial", "method", "step", "metric", "value")


class SchemaVersionError(ValueError):
    pass


@dataclass
class RunResult:
    kind: str
    config: dict
    summary: dict = field(default_factory=dict)
    trials: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    def add_curve(self, trial: int, method: str, step: int, metric: str, value: float) -> None:
        self.curves.append([int(trial), str(method), int(step), str(metric), float(value)])

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "config": self.config,
            "summary": self.summary,
            "trials": self.trials,
            "curves": self.curves,
            "timing": self.timing,
        }

    def without_timing(self) -> dict:
        d = self.to_dict()
        d.pop("timing")
        return d


def curves_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".curves.csv")


def emit_results(result: RunResult, path) -> Path:
    """Write ``path`` (JSON) and the sibling ``<stem>.curves.csv``; returns the CSV path."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(result.to_dict(), indent=1, allow_nan=True), encoding="utf-8")
        cpath = curves_path(path)
        with cpath.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CURVE_COLUMNS)
            for trial, method, step, metric, value in result.curves:
                w.writerow([trial, method, step, metric, repr(float(value))])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return cpath


def load_results(path) -> RunResult:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise OSError(f"cannot read results from {path}: {exc}") from exc
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"{path}: schema {version!r}, expected {SCHEMA_VERSION!r}")
    return RunResult(
        kind=doc["kind"],
        config=doc["config"],
        summary=doc["summary"],
        trials=doc["trials"],
        curves=doc["curves"],
        timing=doc["timing"],
        schema_version=version,
    )
