"""Exact DAG search for small linear Gaussian problems (a test oracle for EM)."""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from ..core import SufficientStats, into_dag
from ..likelihood import LOG_2PI
from .augmented import SolverTrace
from .config import SolverConfig
from .linear import FitResult

MAX_D = 5


@lru_cache(maxsize=None)
def all_dags(d: int) -> np.ndarray:
    """Every DAG on ``d`` labelled nodes as an ``(n_dags, d)`` array of parent bitmasks."""
    if d > MAX_D:
        raise ValueError(f"exhaustive enumeration supports d <= {MAX_D}, got {d}")
    codes = set()
    for perm in itertools.permutations(range(d)):
        pairs = [(perm[a], perm[b]) for a in range(d) for b in range(a + 1, d)]
        bits = (np.arange(1 << len(pairs))[:, None] >> np.arange(len(pairs))) & 1
        weights = np.array([1 << (i * d + j) for i, j in pairs], dtype=np.int64)
        codes.update((bits @ weights).tolist())
    codes = np.array(sorted(codes), dtype=np.int64)
    masks = np.zeros((codes.size, d), dtype=np.int64)
    for i in range(d):
        for j in range(d):
            masks[:, j] |= ((codes >> (i * d + j)) & 1) << i
    return masks


def _bits(mask: int, d: int):
    return [i for i in range(d) if mask >> i & 1]


def regression_table(t: np.ndarray):
    """Least-squares coefficients and residual variance of every node on every parent set."""
    d = t.shape[0]
    resid = np.zeros((d, 1 << d))
    coef = {}
    for j in range(d):
        for mask in range(1 << d):
            if mask >> j & 1:
                resid[j, mask] = np.inf
                continue
            pa = _bits(mask, d)
            if not pa:
                resid[j, mask] = t[j, j]
                continue
            beta = np.linalg.lstsq(t[np.ix_(pa, pa)], t[pa, j], rcond=None)[0]
            coef[j, mask] = beta
            resid[j, mask] = t[j, j] - t[j, pa] @ beta
    return np.maximum(resid, 1e-300), coef


def structure_scores(t, masks, equal_variance: bool, edge_penalty: float):
    """Penalized per-sample log-likelihood of each structure in ``masks``."""
    d = t.shape[0]
    resid, _ = regression_table(t)
    r = resid[np.arange(d), masks]
    if equal_variance:
        ll = -0.5 * d * (LOG_2PI + np.log(r.sum(axis=1) / d) + 1.0)
    else:
        ll = -0.5 * np.sum(LOG_2PI + np.log(r) + 1.0, axis=1)
    n_edges = sum(((masks >> i) & 1).sum(axis=1) for i in range(d))
    return ll - edge_penalty * n_edges


def fit_exhaustive_gaussian(t, cfg: SolverConfig) -> FitResult:
    """Global maximizer of the edge-penalized Gaussian likelihood over all DAGs.

    Each node's weights are the least-squares fit on its parents, so the
    result is exact; no thresholding is applied. Each edge costs
    ``cfg.edge_cost(n)``.
    """
    stats = t if isinstance(t, SufficientStats) else SufficientStats(t, 1)
    tm, d = stats.t, stats.d
    edge_penalty = cfg.edge_cost(stats.n)
    masks = all_dags(d)
    scores = structure_scores(tm, masks, cfg.equal_variance, edge_penalty)
    best = masks[int(np.argmax(scores))]
    _, coef = regression_table(tm)
    w = np.zeros((d, d))
    for j in range(d):
        if best[j]:
            w[_bits(int(best[j]), d), j] = coef[j, int(best[j])]
    m = np.eye(d) - w
    resid = np.einsum("ij,ik,kj->j", m, tm, m)
    sigma_z = np.full(d, resid.mean()) if cfg.equal_variance else resid
    trace = SolverTrace()
    trace.add(outer=0, objective=float(-scores.max()), h=0.0, rho=0.0, alpha=0.0)
    return FitResult(w, into_dag(w), sigma_z, 0.0, trace=trace)
