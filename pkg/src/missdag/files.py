"""CSV readers and writers for datasets and graphs.

Data files have a header row of column names and one row per sample; a
missing cell is an empty field or ``NaN``. Graphs are written either as an
edge list (``from,to,weight``) or as a dense matrix with a header row.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .core import MaskedDataset, WeightedDag, _as_square

_MISSING = {"", "nan", "NaN", "NA"}


def _fmt(v: float) -> str:
    return repr(float(v))


def read_data_csv(path) -> MaskedDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            rows.append([np.nan if v.strip() in _MISSING else float(v) for v in row])
    x = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return MaskedDataset.from_array(x, columns=header)


def write_data_csv(path, data, columns=None) -> None:
    """Write a :class:`MaskedDataset` or a plain matrix; missing cells become empty."""
    if isinstance(data, MaskedDataset):
        x, y = data.x, data.y
        columns = columns or data.columns
    else:
        x = np.asarray(data, dtype=float)
        y = ~np.isnan(x)
    columns = columns or [f"X{j + 1}" for j in range(x.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row, obs in zip(x, y):
            w.writerow([_fmt(v) if o else "" for v, o in zip(row, obs)])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return np.array([[float(v) for v in row] for row in reader if row], dtype=float)


def write_matrix_csv(path, m, columns=None) -> None:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    columns = columns or [f"X{j + 1}" for j in range(m.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in m:
            w.writerow([_fmt(v) for v in row])


def write_edge_list(path, g) -> None:
    """Edge-list CSV. A ``#d`` row stores the node count so empty graphs round-trip."""
    w = g.weights if isinstance(g, WeightedDag) else _as_square(g)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["from", "to", "weight"])
        out.writerow(["#d", w.shape[0], ""])
        for i, j in zip(*np.nonzero(w)):
            out.writerow([int(i), int(j), _fmt(w[i, j])])


def read_edge_list(path, d=None) -> np.ndarray:
    edges = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            if row["from"] == "#d":
                d = int(row["to"]) if d is None else d
                continue
            weight = row.get("weight") or "1"
            edges.append((int(row["from"]), int(row["to"]), float(weight)))
    if d is None:
        d = 1 + max((max(i, j) for i, j, _ in edges), default=-1)
    w = np.zeros((d, d))
    for i, j, v in edges:
        w[i, j] = v
    return w


def read_graph(path) -> np.ndarray:
    """Read either graph format, deciding by the header row."""
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    if header[:2] == ["from", "to"]:
        return read_edge_list(path)
    return read_matrix_csv(path)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
