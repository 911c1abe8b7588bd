"""Shared domain types, acyclicity machinery, thresholding and CPDAG conversion."""

from __future__ import annotations

from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import FrozenSet, Optional, Tuple

import numpy as np
import scipy.linalg as sla

NOISE_FAMILIES = ("gaussian_ev", "gaussian_nv", "gumbel", "laplace", "exponential")


def _as_square(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightedDag:
    """Weighted adjacency matrix; ``weights[i, j] != 0`` means an edge i -> j.

    Build through :func:`into_dag` to get the acyclicity check.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = _as_square(self.weights).copy()
        if np.any(np.diag(w) != 0):
            raise ValueError("diagonal of a WeightedDag must be exactly zero")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        return (self.weights != 0).astype(int)

    def edges(self):
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.weights))]

    def __eq__(self, other):
        if not isinstance(other, WeightedDag):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())


def into_dag(m) -> WeightedDag:
    """Validate a candidate matrix and wrap it as a :class:`WeightedDag`."""
    m = _as_square(m)
    if not is_acyclic(m):
        raise ValueError("matrix contains a directed cycle")
    return WeightedDag(m)


@dataclass(frozen=True)
class Cpdag:
    d: int
    directed_edges: FrozenSet[Tuple[int, int]] = frozenset()
    undirected_edges: FrozenSet[FrozenSet[int]] = frozenset()

    def __post_init__(self):
        directed = frozenset((int(a), int(b)) for a, b in self.directed_edges)
        undirected = frozenset(frozenset(int(v) for v in e) for e in self.undirected_edges)
        for a, b in directed:
            if (b, a) in directed:
                raise ValueError(f"edge {a}-{b} directed both ways")
            if frozenset((a, b)) in undirected:
                raise ValueError(f"edge {a}-{b} both directed and undirected")
        object.__setattr__(self, "directed_edges", directed)
        object.__setattr__(self, "undirected_edges", undirected)

    def pair_state(self, a: int, b: int) -> str:
        """State of the unordered pair as seen from ``a``: '', '->', '<-' or '--'."""
        if (a, b) in self.directed_edges:
            return "->"
        if (b, a) in self.directed_edges:
            return "<-"
        if frozenset((a, b)) in self.undirected_edges:
            return "--"
        return ""


@dataclass(frozen=True)
class MaskedDataset:
    """Observation matrix plus observation mask (``y == 1`` means observed).

    Missing cells of ``x`` hold NaN; the mask is authoritative.
    """

    x: np.ndarray
    y: np.ndarray
    columns: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.asarray(self.y).astype(bool)
        if x.ndim != 2 or x.shape != y.shape:
            raise ValueError(f"x and y shapes differ: {x.shape} vs {y.shape}")
        if x.shape[0] == 0:
            raise ValueError("dataset has no rows")
        empty = ~y.any(axis=1)
        if empty.any():
            raise ValueError(f"{int(empty.sum())} rows have no observed entry")
        if not np.all(np.isfinite(x[y])):
            raise ValueError("observed cells must be finite")
        x[~y] = np.nan
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.columns is not None:
            cols = tuple(str(c) for c in self.columns)
            if len(cols) != x.shape[1]:
                raise ValueError("column names do not match data width")
            object.__setattr__(self, "columns", cols)

    @classmethod
    def from_array(cls, x, columns=None) -> "MaskedDataset":
        """Build from an array where NaN marks missing cells."""
        x = np.asarray(x, dtype=float)
        return cls(x, ~np.isnan(x), columns)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def missing_rate(self) -> float:
        return float(1.0 - self.y.mean())

    @property
    def is_complete(self) -> bool:
        return bool(self.y.all())

    def filled(self, value: float = 0.0) -> np.ndarray:
        out = self.x.copy()
        out[~self.y] = value
        return out

    def patterns(self):
        """Yield ``(observed_mask, row_indices)`` for each distinct missingness pattern."""
        uniq, inverse = np.unique(self.y, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).ravel()
        for k, pattern in enumerate(uniq):
            yield pattern.astype(bool), np.flatnonzero(inverse == k)


@dataclass(frozen=True)
class NoiseSpec:
    family: str
    scales: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        scales = np.atleast_1d(np.asarray(self.scales, dtype=float)).copy()
        if np.any(scales <= 0):
            raise ValueError("noise scales must be strictly positive")
        if self.family == "gaussian_ev" and not np.all(scales == scales[0]):
            raise ValueError("gaussian_ev requires equal scales")
        scales.setflags(write=False)
        object.__setattr__(self, "scales", scales)

    @classmethod
    def equal(cls, family: str, d: int, scale: float = 1.0) -> "NoiseSpec":
        return cls(family, np.full(d, float(scale)))


@dataclass(frozen=True)
class SufficientStats:
    """Second-moment matrix ``t`` (an estimate of ``X.T @ X / n``) from ``n`` rows."""

    t: np.ndarray
    n: int

    def __post_init__(self):
        t = _as_square(self.t).copy()
        if not np.allclose(t, t.T, rtol=1e-9, atol=1e-12):
            raise ValueError("sufficient statistic must be symmetric")
        t = 0.5 * (t + t.T)
        scale = max(1.0, float(np.max(np.abs(np.diag(t)))))
        if np.linalg.eigvalsh(t)[0] < -1e-8 * scale:
            raise ValueError("sufficient statistic must be positive semidefinite")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @classmethod
    def from_complete(cls, x) -> "SufficientStats":
        x = np.asarray(x, dtype=float)
        return cls(x.T @ x / x.shape[0], x.shape[0])

    @property
    def d(self) -> int:
        return self.t.shape[0]


# ---------------------------------------------------------------------------
# Acyclicity
# ---------------------------------------------------------------------------


def is_acyclic(m) -> bool:
    """True iff the nonzero pattern of ``m`` has no directed cycle."""
    m = _as_square(m)
    if np.any(np.diag(m) != 0):
        return False
    ts = TopologicalSorter({j: set(np.flatnonzero(m[:, j]).tolist()) for j in range(m.shape[0])})
    try:
        ts.prepare()
    except CycleError:
        return False
    return True


def topological_order(m) -> list:
    m = _as_square(m)
    ts = TopologicalSorter({j: set(np.flatnonzero(m[:, j]).tolist()) for j in range(m.shape[0])})
    try:
        return list(ts.static_order())
    except CycleError as exc:
        raise ValueError("graph contains a directed cycle") from exc


def h_acyclicity(m) -> Tuple[float, np.ndarray]:
    """Trace-exponential acyclicity measure and its gradient.

    ``h(m) = tr(exp(m * m)) - d`` is zero exactly on acyclic patterns and
    positive otherwise; the gradient is ``2 * exp(m * m).T * m``.
    """
    m = _as_square(m)
    e = sla.expm(m * m)
    value = float(np.trace(e) - m.shape[0])
    return max(value, 0.0), 2.0 * e.T * m


def threshold_to_dag(m, threshold: float = 0.3) -> WeightedDag:
    """Zero entries below ``threshold`` in magnitude, then drop the weakest
    surviving edge until the pattern is acyclic."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    w = _as_square(m).copy()
    np.fill_diagonal(w, 0.0)
    w[np.abs(w) < threshold] = 0.0
    while not is_acyclic(w):
        nz = np.flatnonzero(w)
        k = nz[np.argmin(np.abs(w.flat[nz]))]
        w.flat[k] = 0.0
    return WeightedDag(w)


# ---------------------------------------------------------------------------
# CPDAG
# ---------------------------------------------------------------------------


def v_structures(adj) -> set:
    """Unshielded colliders ``(a, c, b)`` with ``a < b`` and a -> c <- b."""
    adj = np.asarray(adj) != 0
    skel = adj | adj.T
    out = set()
    for c in range(adj.shape[0]):
        parents = np.flatnonzero(adj[:, c])
        for i, a in enumerate(parents):
            for b in parents[i + 1:]:
                if not skel[a, b]:
                    out.add((int(a), int(c), int(b)))
    return out


def dag_to_cpdag(g) -> Cpdag:
    """CPDAG of the Markov equivalence class of ``g``.

    Starts from the v-structures and closes under Meek rules 1-3.
    """
    w = g.weights if isinstance(g, WeightedDag) else _as_square(g)
    adj = w != 0
    if not is_acyclic(adj.astype(float)):
        raise ValueError("dag_to_cpdag needs an acyclic graph")
    d = adj.shape[0]
    skel = adj | adj.T
    # directed[i, j]: i -> j oriented; undirected pairs have skel and neither flag
    directed = np.zeros((d, d), dtype=bool)
    for a, c, b in v_structures(adj):
        directed[a, c] = directed[b, c] = True

    def undirected(i, j):
        return skel[i, j] and not directed[i, j] and not directed[j, i]

    changed = True
    while changed:
        changed = False
        for i in range(d):
            for j in range(d):
                if not undirected(i, j):
                    continue
                # R1: k -> i - j, k and j non-adjacent
                r1 = any(directed[k, i] and not skel[k, j] for k in range(d) if k != j)
                # R2: i -> k -> j with i - j
                r2 = any(directed[i, k] and directed[k, j] for k in range(d))
                # R3: i - k1 -> j, i - k2 -> j, k1 and k2 non-adjacent
                ks = [k for k in range(d) if undirected(i, k) and directed[k, j]]
                r3 = any(not skel[a, b] for x, a in enumerate(ks) for b in ks[x + 1:])
                if r1 or r2 or r3:
                    directed[i, j] = True
                    changed = True
    dir_edges = {(int(i), int(j)) for i, j in zip(*np.nonzero(directed))}
    und_edges = {
        frozenset((int(i), int(j)))
        for i, j in zip(*np.nonzero(np.triu(skel)))
        if not directed[i, j] and not directed[j, i]
    }
    return Cpdag(d, frozenset(dir_edges), frozenset(und_edges))
