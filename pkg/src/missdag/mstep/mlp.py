"""Nonlinear additive-noise solver: one small sigmoid MLP per node."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
from scipy.special import expit

from ..core import threshold_to_dag
from ..likelihood import LOG_2PI, DegenerateResidualError, NoiseDensity
from ..models import MlpSem
from .augmented import augmented_lagrangian, lbfgsb
from .config import SolverConfig
from .linear import FitResult, _row_weights


class MlpLayout:
    """Flat parameter vector ``[w1, b1, w2, b2]`` for ``d`` nodes with ``m`` hidden units.

    ``w1`` has shape ``(d, m, d)``; ``w1[j, :, j]`` is pinned to zero so no
    node reads itself.
    """

    def __init__(self, d: int, m: int):
        self.d, self.m = d, m
        self.n_w1 = d * m * d
        self.sizes = [self.n_w1, d * m, d * m, d]
        self.offsets = np.cumsum([0] + self.sizes)

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def unpack(self, v):
        d, m = self.d, self.m
        o = self.offsets
        return (v[o[0]:o[1]].reshape(d, m, d), v[o[1]:o[2]].reshape(d, m),
                v[o[2]:o[3]].reshape(d, m), v[o[3]:o[4]])

    def pack(self, w1, b1, w2, b2) -> np.ndarray:
        return np.concatenate([np.ravel(w1), np.ravel(b1), np.ravel(w2), np.ravel(b2)]).astype(float)

    def grad_pack(self, gw1, gb1, gw2, gb2) -> np.ndarray:
        return self.pack(gw1, gb1, gw2, gb2)

    def bounds(self, allowed=None):
        """L-BFGS-B bounds fixing ``w1[j, :, k]`` at zero unless ``allowed[k, j]``."""
        d, m = self.d, self.m
        ok = ~np.eye(d, dtype=bool) if allowed is None else np.asarray(allowed, dtype=bool) & ~np.eye(d, dtype=bool)
        free = np.broadcast_to(ok.T[:, None, :], (d, m, d)).ravel()
        return [(None, None) if f else (0.0, 0.0) for f in free] + [(None, None)] * (2 * d * m + d)


def mlp_forward(x, w1, b1, w2, b2):
    """Node predictions ``(n, d)`` and hidden activations ``(n, d, m)``."""
    s = expit(np.einsum("nk,jhk->njh", x, w1) + b1)
    return np.einsum("njh,jh->nj", s, w2) + b2, s


def mlp_fit_objective(w1, b1, w2, b2, x, eps: float = 1e-8, weights=None):
    """Negative per-sample standardized Gaussian log-likelihood of the per-node MLPs.

    Residual scales are profiled to their (optionally row-weighted) RMS,
    which leaves ``sum_j (log(2 pi) + 1 + log mse_j) / 2``. Returns the value
    and gradients for ``(w1, b1, w2, b2)``.
    """
    p = _row_weights(x.shape[0], weights)
    pred, s = mlp_forward(x, w1, b1, w2, b2)
    r = x - pred
    mse = p @ (r * r)
    if np.any(mse <= eps):
        raise DegenerateResidualError(f"residual variance <= {eps} in columns {np.flatnonzero(mse <= eps).tolist()}")
    value = 0.5 * np.sum(LOG_2PI + 1.0 + np.log(mse))
    dpred = -p[:, None] * r / mse
    gb2 = dpred.sum(axis=0)
    gw2 = np.einsum("nj,njh->jh", dpred, s)
    da = dpred[:, :, None] * w2 * s * (1.0 - s)
    gb1 = da.sum(axis=0)
    gw1 = np.einsum("njh,nk->jhk", da, x)
    return float(value), (gw1, gb1, gw2, gb2)


def mlp_connectivity(w1):
    """``S[k, j] = sum_h w1[j, h, k]^2``, the squared input-to-node strengths."""
    return np.einsum("jhk->kj", w1 * w1)


def mlp_h(w1):
    """Acyclicity of the connectivity graph and its gradient with respect to ``w1``.

    Overflowing exponentials (possible during line searches) give ``h = inf``.
    """
    s = mlp_connectivity(w1)
    with np.errstate(over="ignore", invalid="ignore"):
        e = sla.expm(s)
    h = float(np.trace(e) - s.shape[0])
    if not np.isfinite(h):
        return np.inf, np.zeros_like(w1)
    return max(h, 0.0), 2.0 * e[:, None, :] * w1


def mlp_penalized_objective(v, layout: MlpLayout, x, lambda1: float, lambda2: float, weights=None,
                            eps: float = 1e-3):
    """Fit term plus ``lambda1`` group penalty on first-layer weights and ``lambda2 / 2`` squared l2 on all weights.

    The group of input ``k`` to node ``j`` is ``w1[j, :, k]``; its l2 norm is
    smoothed as ``sqrt(|g|^2 + eps^2) - eps`` so a quasi-Newton solver applies.
    """
    w1, b1, w2, b2 = layout.unpack(v)
    f, (gw1, gb1, gw2, gb2) = mlp_fit_objective(w1, b1, w2, b2, x, weights=weights)
    f += 0.5 * lambda2 * (np.sum(w1 * w1) + np.sum(w2 * w2))
    norms = np.sqrt(np.sum(w1 * w1, axis=1, keepdims=True) + eps * eps)
    f += lambda1 * float(np.sum(norms - eps))
    gw1 = gw1 + lambda2 * w1 + lambda1 * w1 / norms
    gw2 = gw2 + lambda2 * w2
    return float(f), layout.grad_pack(gw1, gb1, gw2, gb2)


def init_mlp_params(d: int, m: int, rng, scale: float = 0.1, hidden_scale=None):
    """Uniform ``(-scale, scale)`` weights; ``hidden_scale`` overrides it for ``w1`` and ``b1``."""
    hs = scale if hidden_scale is None else hidden_scale
    w1 = rng.uniform(-hs, hs, size=(d, m, d))
    w1[np.arange(d), :, np.arange(d)] = 0.0
    return w1, rng.uniform(-hs, hs, size=(d, m)), rng.uniform(-scale, scale, size=(d, m)), np.zeros(d)


def to_standard_units(params, mu, sd):
    """Re-express MLP parameters acting on ``x`` as parameters acting on ``(x - mu) / sd``."""
    w1, b1, w2, b2 = params
    return w1 * sd, b1 + np.einsum("jhk,k->jh", w1, mu), w2 / sd[:, None], (b2 - mu) / sd


def from_standard_units(params, mu, sd):
    """Inverse of :func:`to_standard_units`; the predictions agree exactly."""
    w1, b1, w2, b2 = params
    w1x = w1 / sd
    return w1x, b1 - np.einsum("jhk,k->jh", w1x, mu), w2 * sd[:, None], b2 * sd + mu


def fit_mlp_anm(x, cfg: SolverConfig, init=None, weights=None) -> FitResult:
    """Per-node MLP additive-noise model under the hard acyclicity constraint.

    Columns are standardized before fitting; the standardized likelihood is
    invariant to this, and it makes the penalties independent of the data
    scale. The returned :class:`MlpSem` acts on the original units. ``init``
    is an ``MlpSem`` to warm-start from (hidden width ``cfg.hidden``); the
    first penalty sub-problem then already enforces acyclicity (``rho >= 1``)
    so the warm start is not traded for a cyclic fit. Without one, a warm-up
    fit without the sparsity and acyclicity terms runs first from small output
    weights and unit-scale hidden weights. Purely nonlinear (for example
    even) dependencies have no low-order signal near zero hidden weights,
    where weight decay and the sparsity penalty would otherwise pin them.

    The candidate adjacency ``A[k, j]`` is the l2 norm of node ``j``'s
    standardized first-layer weights on input ``k``; it is thresholded into
    the returned DAG.
    """
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    if n < d:
        raise ValueError("need at least as many samples as variables")
    p = _row_weights(n, weights)
    mu = p @ x
    sd = np.sqrt(p @ (x - mu) ** 2)
    if np.any(sd <= 1e-8):
        raise DegenerateResidualError(f"constant columns {np.flatnonzero(sd <= 1e-8).tolist()}")
    z = (x - mu) / sd
    layout = MlpLayout(d, cfg.hidden)
    bounds = layout.bounds()

    def loss(v):
        return mlp_penalized_objective(v, layout, z, cfg.lambda1, cfg.lambda2, p)

    def constraint(v):
        h, gw1 = mlp_h(layout.unpack(v)[0])
        return h, np.concatenate([gw1.ravel(), np.zeros(layout.size - layout.n_w1)])

    if init is None:
        v0 = layout.pack(*init_mlp_params(d, cfg.hidden, np.random.default_rng(cfg.seed), hidden_scale=1.0))
        v0 = lbfgsb(lambda v: mlp_penalized_objective(v, layout, z, 0.0, cfg.lambda2, p), v0, bounds, cfg)
        al_cfg = cfg
    else:
        v0 = layout.pack(*to_standard_units((init.w1, init.b1, init.w2, init.b2), mu, sd))
        al_cfg = cfg.with_(rho0=max(cfg.rho0, 1.0))

    v, h, trace = augmented_lagrangian(loss, constraint, v0, bounds, al_cfg)
    params = layout.unpack(v)
    adj = np.sqrt(mlp_connectivity(params[0]))
    w1, b1, w2, b2 = from_standard_units(params, mu, sd)
    pred, _ = mlp_forward(x, w1, b1, w2, b2)
    scales = np.sqrt(p @ (x - pred) ** 2)
    model = MlpSem(w1, b1, w2, b2, NoiseDensity("gaussian"), scales)
    return FitResult(adj, threshold_to_dag(adj, cfg.threshold), scales ** 2, h, model=model, trace=trace, params=v)
