from __future__ import annotations

import csv
import io
import math
import sys
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

DIVERGES = "diverges"


def format_value(value: Any) -> str:
    """CSV cell text; +inf costs and dB values become the ``diverges`` marker."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if value == math.inf:
            return DIVERGES
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def to_db(value: float) -> float:
    if value == math.inf:
        return math.inf
    if value <= 0:
        return -math.inf
    return 10.0 * math.log10(value)


def render(rows: Iterable[Mapping[str, Any]], columns: Sequence[str]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(col)) for col in columns])
    return buffer.getvalue()


def write_rows(rows: Iterable[Mapping[str, Any]], columns: Sequence[str], out: str | Path | None) -> None:
    text = render(rows, columns)
    if out is None:
        sys.stdout.write(text)
        return
    Path(out).write_text(text, encoding="utf-8")


def sibling(out: str | Path, suffix: str) -> Path:
    """``runs/loop.csv`` -> ``runs/loop_<suffix>.csv``."""
    path = Path(out)
    return path.with_name(f"{path.stem}_{suffix}{path.suffix or '.csv'}")
