"""Experiment reports and their JSON / CSV serialization."""

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

CSV_FLOAT_FORMAT = ".17g"


@dataclass
class Table:
    """A CSV curve: header row and fixed-order rows."""

    header: list[str]
    rows: list[list]


@dataclass
class ExperimentReport:
    experiment: str
    version: str
    config: dict
    arms: list[dict]
    summary: dict
    files: list[str] = field(default_factory=list)
    timing: dict[str, float] | None = None
    tables: dict[str, Table] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        out = {
            "experiment": self.experiment,
            "version": self.version,
            "config": self.config,
            "arms": self.arms,
            "summary": self.summary,
            "files": self.files,
        }
        if self.timing is not None:
            out["timing"] = self.timing
        return to_builtin(out)

    def arm(self, name: str) -> dict:
        for row in self.arms:
            if row["arm"] == name:
                return row
        raise KeyError(name)


def to_builtin(value):
    """Recursively convert numpy scalars, arrays and enums to JSON-native values."""

    match value:
        case dict():
            return {str(k): to_builtin(v) for k, v in value.items()}
        case list() | tuple():
            return [to_builtin(v) for v in value]
        case np.ndarray():
            return [to_builtin(v) for v in value.tolist()]
        case np.bool_():
            return bool(value)
        case np.integer():
            return int(value)
        case np.floating():
            return float(value)
        case Enum():
            return value.value
        case _:
            return value


def dumps(report: ExperimentReport) -> str:
    return json.dumps(report.to_dict(), indent=2, allow_nan=False) + "\n"


def _cell(value) -> str:
    value = to_builtin(value)
    if isinstance(value, float):
        return format(value, CSV_FLOAT_FORMAT)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def write_json(report: ExperimentReport, path: Path) -> None:
    path.write_text(dumps(report), encoding="utf-8")


def write_csv(table: Table, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(table.header)
        for row in table.rows:
            writer.writerow([_cell(v) for v in row])
