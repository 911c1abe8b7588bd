"""Linear SEM solvers: Gaussian (through sufficient statistics) and log-cosh ICA-style."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import SufficientStats, WeightedDag, h_acyclicity, threshold_to_dag
from ..likelihood import LOG_2PI, DegenerateResidualError, NoiseDensity, logcosh, residual_scales
from ..models import LinearSem
from .augmented import SolverTrace, augmented_lagrangian, lbfgsb
from .config import SolverConfig


@dataclass
class FitResult:
    """Output of an M-step solve.

    ``weights`` is the raw solver output (an adjacency-strength matrix for
    the MLP); ``dag`` is its thresholded, acyclic version. ``sigma_z`` holds
    noise variances and ``model`` is the SEM to use in the next E-step.
    """

    weights: np.ndarray
    dag: WeightedDag
    sigma_z: np.ndarray
    h: float
    model: object = None
    trace: SolverTrace = field(default_factory=SolverTrace)
    params: Optional[np.ndarray] = None


# ---------------------------------------------------------------------------
# l1 split parameterization: W = W+ - W-, both non-negative, zero diagonal
# ---------------------------------------------------------------------------


def split_bounds(d: int):
    diag = np.eye(d, dtype=bool).ravel()
    half = [(0.0, 0.0) if on else (0.0, None) for on in diag]
    return half + half


def split(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return np.concatenate([np.maximum(w, 0).ravel(), np.maximum(-w, 0).ravel()])


def unsplit(v, d: int) -> np.ndarray:
    return (v[: d * d] - v[d * d:]).reshape(d, d)


def _split_grad(g) -> np.ndarray:
    g = g.ravel()
    return np.concatenate([g, -g])


# ---------------------------------------------------------------------------
# objectives, each returning (value, gradient wrt W)
# ---------------------------------------------------------------------------


def profile_noise_variances(t, w, equal_variance: bool) -> np.ndarray:
    """Maximizers of the Gaussian likelihood over noise variances for fixed ``W``."""
    t = t.t if isinstance(t, SufficientStats) else np.asarray(t, dtype=float)
    m = np.eye(t.shape[0]) - w
    resid = np.einsum("ij,ik,kj->j", m, t, m)
    if equal_variance:
        return np.full(t.shape[0], resid.mean())
    return resid


def gaussian_objective(w, t, equal_variance: bool):
    """Negative per-sample Gaussian log-likelihood with noise variances profiled out."""
    d = t.shape[0]
    m = np.eye(d) - w
    tm = t @ m
    resid = np.einsum("ij,ij->j", m, tm)
    if equal_variance:
        s2 = resid.sum() / d
        value = 0.5 * d * (LOG_2PI + np.log(s2) + 1.0)
        grad = -tm / s2
    else:
        value = 0.5 * np.sum(LOG_2PI + np.log(resid) + 1.0)
        grad = -tm / resid
    return float(value), grad


def neg_logdet_term(w):
    """``-log|det(I - W)|`` and its gradient."""
    m = np.eye(w.shape[0]) - w
    sign, logdet = np.linalg.slogdet(m)
    return float(-logdet), np.linalg.inv(m).T


def logcosh_objective(w, x, eps: float = 1e-8, weights=None):
    """Negative per-sample standardized log-likelihood under the log-cosh prior, ``f(x) = x W``.

    Optional row ``weights`` turn the per-sample averages into weighted ones.
    """
    p = _row_weights(x.shape[0], weights)
    r = x - x @ w
    s = residual_scales(r, eps, p)
    z = r / s
    value = -(p @ np.sum(np.log(0.5) - 2.0 * logcosh(z), axis=1) - np.sum(np.log(s)))
    gz = -2.0 * np.tanh(z)  # d log p / dz
    # dL/ds_j, with L the per-sample log-likelihood
    dl_ds = -(p @ (gz * z)) / s - 1.0 / s
    dl_dr = p[:, None] * (gz + dl_ds * r) / s
    return float(value), x.T @ dl_dr


def _row_weights(n: int, weights=None) -> np.ndarray:
    """Row weights normalized to sum to one (uniform by default)."""
    if weights is None:
        return np.full(n, 1.0 / n)
    p = np.asarray(weights, dtype=float)
    if p.shape != (n,) or np.any(p < 0) or p.sum() <= 0:
        raise ValueError("weights must be nonnegative, one per row, with a positive sum")
    return p / p.sum()


def _with_penalties(objective, d, lambda1, lambda2=0.0, soft_dag=False, logdet=False):
    """Wrap a W-objective into a split-parameter objective with l1 and optional soft terms."""

    def fun(v):
        w = unsplit(v, d)
        f, g = objective(w)
        if logdet:
            f2, g2 = neg_logdet_term(w)
            f, g = f + f2, g + g2
        if soft_dag:
            h, gh = h_acyclicity(w)
            f, g = f + lambda2 * h, g + lambda2 * gh
        return f + lambda1 * v.sum(), _split_grad(g) + lambda1

    return fun


def _h_split(d):
    def constraint(v):
        h, g = h_acyclicity(unsplit(v, d))
        return h, _split_grad(g)

    return constraint


def _solve(objective, d, cfg: SolverConfig, w_init=None):
    v0 = split(np.zeros((d, d)) if w_init is None else w_init)
    bounds = split_bounds(d)
    if cfg.method == "soft":
        fun = _with_penalties(objective, d, cfg.lambda1, cfg.lambda2, soft_dag=True, logdet=cfg.include_logdet)
        v = lbfgsb(fun, v0, bounds, cfg)
        w = unsplit(v, d)
        trace = SolverTrace()
        trace.add(outer=0, objective=float(fun(v)[0]), h=h_acyclicity(w)[0], rho=0.0, alpha=0.0)
        return w, h_acyclicity(w)[0], trace
    fun = _with_penalties(objective, d, cfg.lambda1)
    v, h, trace = augmented_lagrangian(fun, _h_split(d), v0, bounds, cfg)
    return unsplit(v, d), h, trace


def fit_linear_gaussian(t, cfg: SolverConfig, w_init=None) -> FitResult:
    """Penalized, DAG-constrained Gaussian maximum likelihood from sufficient statistics.

    Minimizes ``-loglik(T; W, profiled variances) + lambda1 |W|_1`` under the
    hard acyclicity constraint (``hard_al``) or with a soft ``lambda2 h(W)``
    penalty (``soft``), then thresholds.
    """
    if not cfg.model_class.startswith("linear_gaussian"):
        raise ValueError(f"fit_linear_gaussian cannot fit {cfg.model_class}")
    stats = t if isinstance(t, SufficientStats) else SufficientStats(t, 1)
    tm, d, ev = stats.t, stats.d, cfg.equal_variance
    w, h, trace = _solve(lambda w: gaussian_objective(w, tm, ev), d, cfg, w_init)
    sigma_z = profile_noise_variances(tm, w, ev)
    return FitResult(w, threshold_to_dag(w, cfg.threshold), sigma_z, h, trace=trace)


def fit_linear_logcosh(x, cfg: SolverConfig, w_init=None, weights=None) -> FitResult:
    """Linear SEM under the log-cosh standardized likelihood (for non-Gaussian noise).

    ``x`` is a complete matrix, typically the Monte Carlo completions, with
    optional row ``weights``.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[1]
    p = _row_weights(x.shape[0], weights)
    residual_scales(x, weights=p)  # fail early on a constant column
    w, h, trace = _solve(lambda w: logcosh_objective(w, x, weights=p), d, cfg, w_init)
    try:
        scales = residual_scales(x - x @ w, weights=p)
    except DegenerateResidualError as exc:
        raise DegenerateResidualError(f"degenerate residuals after fit: {exc}") from exc
    model = LinearSem(w, NoiseDensity("logcosh"), scales)
    return FitResult(w, threshold_to_dag(w, cfg.threshold), scales ** 2, h, model=model, trace=trace)
