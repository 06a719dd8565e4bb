"""CSV trace records.

Floats are written with ``repr`` so that a trace read back compares equal
to the records that produced it; missing metrics are empty cells.
"""
from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, Optional

COLUMNS = ("k", "wall_time_s", "upper_value", "fw_gap_practical", "fw_gap_exact",
           "suboptimality", "lower_grad_norm", "normalized_error", "lemma2_measured",
           "lemma2_bound")


@dataclass(frozen=True)
class TraceRecord:
    k: int
    wall_time_s: Optional[float] = None
    upper_value: Optional[float] = None
    fw_gap_practical: Optional[float] = None
    fw_gap_exact: Optional[float] = None
    suboptimality: Optional[float] = None
    lower_grad_norm: Optional[float] = None
    normalized_error: Optional[float] = None
    lemma2_measured: Optional[float] = None
    lemma2_bound: Optional[float] = None

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def format_trace(records: Iterable[TraceRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        w.writerow([_cell(v) for v in astuple(r)])
    return buf.getvalue()


def write_trace(path, records: Iterable[TraceRecord]) -> Path:
    path = Path(path)
    path.write_text(format_trace(records))
    return path


def parse_trace(text: str) -> list[TraceRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ValueError(f"trace header must be {','.join(COLUMNS)}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(COLUMNS):
            raise ValueError(f"line {lineno}: expected {len(COLUMNS)} cells, got {len(row)}")
        vals = [int(row[0])] + [float(c) if c != "" else None for c in row[1:]]
        out.append(TraceRecord(*vals))
    return out


def read_trace(path) -> list[TraceRecord]:
    return parse_trace(Path(path).read_text())
