"""CSV output with round-trip float formatting."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def fmt(value) -> str:
    """Shortest string that parses back to the same double; locale independent."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return repr(float(value))


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="", encoding="ascii") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def joint_columns(prefix: str, n: int) -> list[str]:
    return [f"{prefix}_{j + 1}" for j in range(n)]
