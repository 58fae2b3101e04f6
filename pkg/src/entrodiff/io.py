"""Reading and writing the CSV and JSON artifacts.

Floats are written with 17 significant digits so every value reads back to
the identical 64-bit number.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grid import Grid, State, Trajectory

__all__ = [
    "fmt",
    "json_dumps",
    "read_trajectory_csv",
    "series_csv",
    "sha256_file",
    "trajectory_csv",
]


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _cell_columns(grid: Grid) -> list[str]:
    return ["i", "j"][: grid.dimension]


def trajectory_csv(traj: Trajectory, species: Sequence[str]) -> str:
    """Rows ``t, species, i[, j], value`` ordered by time, species, then cell."""
    grid = traj.grid
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "species", *_cell_columns(grid), "value"])
    idx = list(np.ndindex(*grid.cells))
    for state in traj:
        t = fmt(state.t)
        for s, name in enumerate(species):
            field = state.u[s]
            for cell in idx:
                w.writerow([t, name, *cell, fmt(field[cell])])
    return buf.getvalue()


def read_trajectory_csv(text: str, grid: Grid, species: Sequence[str]) -> Trajectory:
    """Inverse of :func:`trajectory_csv` (step counters are not stored)."""
    index = {n: k for k, n in enumerate(species)}
    cols = _cell_columns(grid)
    fields: dict[float, np.ndarray] = {}
    order: list[float] = []
    for row in csv.DictReader(io.StringIO(text)):
        t = float(row["t"])
        if t not in fields:
            fields[t] = np.full((len(species),) + grid.cells, np.nan)
            order.append(t)
        cell = tuple(int(row[c]) for c in cols)
        fields[t][(index[row["species"]],) + cell] = float(row["value"])
    states = []
    for t in order:
        if np.isnan(fields[t]).any():
            raise ValueError(f"snapshot t={t} is incomplete")
        states.append(State(t, fields[t], grid))
    return Trajectory(states)


def series_csv(header: Sequence[str], rows: Iterable[Sequence[float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for r in rows:
        w.writerow([fmt(x) if isinstance(x, (float, int, np.floating, np.integer)) else x for x in r])
    return buf.getvalue()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def json_dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=False) + "\n"


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
