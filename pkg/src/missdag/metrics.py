"""Structure and distribution recovery scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import WeightedDag, _as_square, dag_to_cpdag


@dataclass(frozen=True)
class StructureScore:
    shd: int
    extra: int
    missing: int
    reversed: int
    precision: float
    recall: float
    f1: float

    def as_row(self) -> dict:
        return {
            "shd": self.shd, "extra": self.extra, "missing": self.missing, "reversed": self.reversed,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
        }


def _pattern(g) -> np.ndarray:
    w = g.weights if isinstance(g, WeightedDag) else _as_square(g)
    return w != 0


def _check_same_size(a, b):
    if a.shape != b.shape:
        raise ValueError(f"graphs differ in size: {a.shape[0]} vs {b.shape[0]} nodes")


def shd(est, truth) -> StructureScore:
    """Structural Hamming distance with unit cost for a reversed edge.

    Precision and recall count an edge as correct only with the right
    orientation; undefined ratios are reported as 0.
    """
    e, t = _pattern(est), _pattern(truth)
    _check_same_size(e, t)
    rev = e & t.T & ~t
    extra = e & ~t & ~t.T
    missing = t & ~e & ~e.T
    n_rev = int(rev.sum())
    n_extra = int(extra.sum())
    n_missing = int(missing.sum())
    correct = int(np.sum(e & t))
    precision = correct / int(e.sum()) if e.any() else 0.0
    recall = correct / int(t.sum()) if t.any() else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return StructureScore(n_extra + n_missing + n_rev, n_extra, n_missing, n_rev, precision, recall, f1)


def shd_cpdag(est, truth) -> int:
    """Number of node pairs whose CPDAG states differ (absent, ->, <-, or undirected)."""
    e, t = _pattern(est), _pattern(truth)
    _check_same_size(e, t)
    ce, ct = dag_to_cpdag(e.astype(float)), dag_to_cpdag(t.astype(float))
    d = e.shape[0]
    return sum(ce.pair_state(a, b) != ct.pair_state(a, b) for a in range(d) for b in range(a + 1, d))


def cov_frobenius(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))
