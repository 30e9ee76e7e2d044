"""Result tables, named checks and locale-independent CSV output."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path


def fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    try:
        return format(float(v), ".17g")
    except (TypeError, ValueError):
        return str(v)


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[tuple] = field(default_factory=list)

    def add(self, *row) -> None:
        if len(row) != len(self.columns):
            raise ValueError(f"{self.name}: row has {len(row)} values, expected {len(self.columns)}")
        self.rows.append(tuple(row))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([fmt(v) for v in row])
        return buf.getvalue()

    def write(self, directory) -> Path:
        path = Path(directory) / f"{self.name}.csv"
        path.write_text(self.to_csv(), encoding="utf-8")
        return path


@dataclass
class Check:
    name: str
    passed: bool
    measured: str
    threshold: str

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: measured {self.measured}; required {self.threshold}"


def check(name: str, passed, measured, threshold: str) -> Check:
    return Check(name, bool(passed), str(measured), threshold)
