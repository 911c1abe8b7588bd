"""Synthetic ground truth: random DAGs, SEM parameters, samples and missingness masks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import networkx as nx
import numpy as np
from scipy.special import expit

from .core import MaskedDataset, NoiseSpec, topological_order
from .likelihood import EULER_GAMMA, NoiseDensity, density_for
from .models import LinearSem, MlpSem, QuadraticSem

GRAPH_MODELS = ("ER", "SF")
MECHANISMS = ("MCAR", "MAR", "MNAR")
SEM_KINDS = ("linear", "mlp", "quadratic")


@dataclass(frozen=True)
class GraphSpec:
    d: int
    k: float = 1
    model: str = "ER"
    seed: int = 0

    def __post_init__(self):
        if self.model not in GRAPH_MODELS:
            raise ValueError(f"graph model must be one of {GRAPH_MODELS}, got {self.model!r}")
        if self.d < 2:
            raise ValueError("need at least 2 nodes")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.model == "SF" and int(self.k) >= self.d:
            raise ValueError("scale-free graphs need k < d")

    @classmethod
    def parse(cls, token: str, d: int, seed: int = 0) -> "GraphSpec":
        """``'ER2'`` -> ``GraphSpec(d, 2, 'ER', seed)``."""
        token = token.strip().upper()
        return cls(d=d, k=float(token[2:] or 1), model=token[:2], seed=seed)


def sample_graph(spec: GraphSpec) -> np.ndarray:
    """0/1 adjacency of a random DAG.

    ER: ``floor(k d)`` distinct node pairs (at most all of them) chosen
    uniformly, oriented along a random permutation. SF: Barabasi-Albert with ``k`` edges per new node,
    oriented from older to newer node, then relabelled at random.
    """
    rng = np.random.default_rng(spec.seed)
    d = spec.d
    adj = np.zeros((d, d), dtype=int)
    if spec.model == "ER":
        iu, ju = np.triu_indices(d, k=1)
        chosen = rng.choice(iu.size, size=min(math.floor(spec.k * d), iu.size), replace=False)
        rank = np.empty(d, dtype=int)
        rank[rng.permutation(d)] = np.arange(d)
        for a, b in zip(iu[chosen], ju[chosen]):
            if rank[a] < rank[b]:
                adj[a, b] = 1
            else:
                adj[b, a] = 1
    else:
        g = nx.barabasi_albert_graph(d, int(spec.k), seed=int(rng.integers(2**31)))
        for a, b in g.edges():
            adj[min(a, b), max(a, b)] = 1
        perm = rng.permutation(d)
        adj = adj[np.ix_(perm, perm)]
    return adj


def _signed_uniform(rng, size, low=0.5, high=2.0) -> np.ndarray:
    return rng.uniform(low, high, size=size) * rng.choice([-1.0, 1.0], size=size)


def sample_weights(skeleton, rng, low: float = 0.5, high: float = 2.0) -> np.ndarray:
    """Edge weights from ``Uniform([-high, -low] U [low, high])``, each interval equally likely."""
    skeleton = np.asarray(skeleton) != 0
    return np.where(skeleton, _signed_uniform(rng, skeleton.shape, low, high), 0.0)


def make_noise_spec(family: str, d: int, rng) -> NoiseSpec:
    """Unit scales for equal-variance families; ``Uniform[1, 2]`` scales for ``gaussian_nv``."""
    if family == "gaussian_nv":
        return NoiseSpec(family, rng.uniform(1.0, 2.0, size=d))
    return NoiseSpec.equal(family, d)


def sample_noise(density: NoiseDensity, scales, n: int, rng) -> np.ndarray:
    """Draw ``(n, d)`` zero-mean noise with the given per-node standard deviations."""
    scales = np.asarray(scales, dtype=float)
    shape = (n, scales.size)
    kind = density.kind
    if kind == "gaussian":
        z = rng.standard_normal(shape)
    elif kind == "laplace":
        z = rng.laplace(0.0, 1.0 / np.sqrt(2.0), shape)
    elif kind == "gumbel":
        beta = np.sqrt(6.0) / np.pi
        z = rng.gumbel(0.0, beta, shape) - EULER_GAMMA * beta
    elif kind == "exponential":
        z = rng.exponential(1.0, shape) - 1.0
    elif kind == "logcosh":
        z = rng.logistic(0.0, 0.5, shape)
    else:
        raise ValueError(kind)
    return z * scales


def random_mlp_sem(skeleton, noise: NoiseSpec, rng, hidden: int = 100) -> MlpSem:
    """One hidden sigmoid layer per node with weights in ``+-[0.5, 2]``, blind to non-parents."""
    skeleton = np.asarray(skeleton) != 0
    d = skeleton.shape[0]
    w1 = _signed_uniform(rng, (d, hidden, d)) * skeleton.T[:, None, :]
    w2 = _signed_uniform(rng, (d, hidden)) * skeleton.any(axis=0)[:, None]
    return MlpSem(w1, np.zeros((d, hidden)), w2, np.zeros(d), density_for(noise.family), noise.scales)


def make_sem(kind: str, skeleton, noise: NoiseSpec, rng, hidden: int = 100):
    if kind == "linear":
        return LinearSem(sample_weights(skeleton, rng), density_for(noise.family), noise.scales)
    if kind == "quadratic":
        return QuadraticSem(np.asarray(skeleton, dtype=float), density_for(noise.family), noise.scales)
    if kind == "mlp":
        return random_mlp_sem(skeleton, noise, rng, hidden)
    raise ValueError(f"sem kind must be one of {SEM_KINDS}, got {kind!r}")


def simulate_sem(model, n: int, rng) -> np.ndarray:
    """Ancestral sampling ``x_j = f_j(parents) + z_j`` in topological order."""
    order = topological_order(model.adjacency)
    z = sample_noise(model.density, model.scales, n, rng)
    x = np.zeros_like(z)
    for j in order:
        x[:, j] = model.predict(x)[:, j] + z[:, j]
    return x


# ---------------------------------------------------------------------------
# Missingness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MissingnessSpec:
    mechanism: str = "MCAR"
    rate: float = 0.1
    fully_observed_fraction: float = 0.3
    logistic_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"mechanism must be one of {MECHANISMS}, got {self.mechanism!r}")
        if not 0.0 <= self.rate < 1.0:
            raise ValueError("missing rate must lie in [0, 1)")
        if self.mechanism != "MCAR" and not 0.0 < self.fully_observed_fraction < 1.0:
            raise ValueError("MAR/MNAR need a fully observed fraction in (0, 1)")


def _calibrated_mask(logits, u, rate, iters: int = 100) -> np.ndarray:
    """Missing-cell indicator ``u < sigmoid(logits + b)`` with ``b`` chosen by
    bisection so the realized rate matches ``rate``."""
    lo, hi = -60.0, 60.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.mean(u < expit(logits + mid)) < rate:
            lo = mid
        else:
            hi = mid
    cands = [u < expit(logits + b) for b in (lo, hi)]
    return min(cands, key=lambda m: abs(m.mean() - rate))


def _standardize(x) -> np.ndarray:
    sd = x.std(axis=0)
    return (x - x.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def apply_missingness(x, spec: MissingnessSpec, rng, max_retries: int = 100) -> MaskedDataset:
    """Mask ``x`` under MCAR, MAR (logistic on fully observed columns) or
    MNAR (self-masking logistic)."""
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    missing = np.zeros((n, d), dtype=bool)
    if spec.rate == 0:
        return MaskedDataset(x, ~missing)

    if spec.mechanism == "MCAR":
        missing = rng.uniform(size=(n, d)) <= spec.rate
        for _ in range(max_retries):
            empty = missing.all(axis=1)
            if not empty.any():
                break
            missing[empty] = rng.uniform(size=(int(empty.sum()), d)) <= spec.rate
        else:
            raise RuntimeError("could not avoid fully missing rows; lower the missing rate")
        return MaskedDataset(x, ~missing)

    n_full = min(d - 1, max(1, math.ceil(spec.fully_observed_fraction * d)))
    full = np.sort(rng.choice(d, size=n_full, replace=False))
    maskable = np.setdiff1d(np.arange(d), full)
    xs = _standardize(x)
    if spec.mechanism == "MAR":
        shape = (n_full, maskable.size)
        w = _signed_uniform(rng, shape, 1.0, 2.0) if spec.logistic_weights is None else np.asarray(spec.logistic_weights, dtype=float).reshape(shape)
        logits = xs[:, full] @ w
    else:
        w = _signed_uniform(rng, maskable.size, 1.0, 2.0) if spec.logistic_weights is None else np.asarray(spec.logistic_weights, dtype=float).reshape(maskable.size)
        logits = xs[:, maskable] * w
    u = rng.uniform(size=(n, maskable.size))
    for c, j in enumerate(maskable):
        missing[:, j] = _calibrated_mask(logits[:, c], u[:, c], spec.rate)
    return MaskedDataset(x, ~missing)
