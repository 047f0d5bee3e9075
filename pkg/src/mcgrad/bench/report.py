"""Benchmark reports and their CSV form."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

HEADER = ("estimator", "param", "mean", "variance", "std_error", "n", "reps", "seed", "oracle", "abs_error", "z_score")


def fmt(x: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return "%.17g" % x


@dataclass(frozen=True)
class ReportRow:
    estimator: str
    param: str
    mean: float
    variance: float
    std_error: float
    n: int
    reps: int
    seed: int
    oracle: float

    @property
    def abs_error(self) -> float:
        return abs(self.mean - self.oracle)

    @property
    def z_score(self) -> float:
        if not self.std_error > 0:
            return float("nan")
        return (self.mean - self.oracle) / self.std_error

    def cells(self) -> list[str]:
        return [
            self.estimator,
            self.param,
            fmt(self.mean),
            fmt(self.variance),
            fmt(self.std_error),
            str(self.n),
            str(self.reps),
            str(self.seed),
            fmt(self.oracle),
            fmt(self.abs_error),
            fmt(self.z_score),
        ]


@dataclass
class BenchmarkReport:
    rows: list[ReportRow] = field(default_factory=list)

    def extend(self, other: "BenchmarkReport") -> None:
        self.rows.extend(other.rows)

    def row(self, param: str) -> ReportRow:
        for r in self.rows:
            if r.param == param:
                return r
        raise KeyError(param)

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(HEADER)
        for r in self.rows:
            w.writerow(r.cells())
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
