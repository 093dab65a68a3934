"""CSV / JSON writers with round-trippable floats.

``None`` becomes an empty CSV cell and ``null`` in JSON. Python's float
``repr`` is the shortest string that parses back to the same double, so
both formats preserve full precision.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Sequence, TextIO


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(rows: Iterable[dict], columns: Sequence[str], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])


def write_json(rows: Iterable[dict], columns: Sequence[str], out: TextIO) -> None:
    data = [{c: row.get(c) for c in columns} for row in rows]
    json.dump(data, out, indent=2, allow_nan=False)
    out.write("\n")


def render(rows: Iterable[dict], columns: Sequence[str], fmt: str) -> str:
    buf = io.StringIO()
    {"csv": write_csv, "json": write_json}[fmt](rows, columns, buf)
    return buf.getvalue()


def save(rows: Iterable[dict], columns: Sequence[str], path: str | Path, fmt: str = "csv") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        {"csv": write_csv, "json": write_json}[fmt](rows, columns, fh)
    return path


class StreamingCSV:
    """Append rows to a CSV file as they are produced."""

    def __init__(self, path: str | Path, columns: Sequence[str]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.columns = tuple(columns)
        self._fh = open(self.path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(self.columns)

    def write(self, rows: Iterable[dict]) -> None:
        for row in rows:
            self._writer.writerow([_cell(row.get(c)) for c in self.columns])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
