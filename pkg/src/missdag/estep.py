"""Posterior machinery for the E-step.

Exact conditional-Gaussian expected statistics for linear Gaussian models,
and Monte Carlo completion of missing cells by rejection sampling for
everything else.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .core import MaskedDataset, SufficientStats
from .likelihood import LOG_2PI, GaussianParams, joint_logdensity, standardized_loglik

log = logging.getLogger(__name__)

JITTER = 1e-8


def _cov_of(params) -> np.ndarray:
    if isinstance(params, GaussianParams):
        return params.implied_cov()
    return np.asarray(params, dtype=float)


def _observed_block_factor(s_oo: np.ndarray):
    """Cholesky factor of the observed block, with diagonal jitter if singular."""
    try:
        return np.linalg.cholesky(s_oo), False
    except np.linalg.LinAlgError:
        return np.linalg.cholesky(s_oo + JITTER * np.eye(s_oo.shape[0])), True


def conditional_expectations(data: MaskedDataset, cov):
    """Conditional means of the missing cells and the expected second moment.

    Returns ``(xhat, t, jitter_count)``: ``xhat`` is the data with missing
    cells replaced by ``E[x_m | x_o]``; ``t`` is ``E[X^T X | X_o] / n`` which
    adds the conditional covariance of the missing block to ``xhat^T xhat``.
    """
    cov = _cov_of(cov)
    d = data.d
    xhat = data.filled(0.0)
    extra = np.zeros((d, d))
    jitter = 0
    for obs, rows in data.patterns():
        mis = ~obs
        if not mis.any():
            continue
        s_oo = cov[np.ix_(obs, obs)]
        s_mo = cov[np.ix_(mis, obs)]
        chol, jittered = _observed_block_factor(s_oo)
        jitter += int(jittered)
        # coef = S_mo S_oo^-1 via two triangular solves
        tmp = np.linalg.solve(chol, s_mo.T)
        coef = np.linalg.solve(chol.T, tmp).T
        xo = xhat[np.ix_(rows, np.flatnonzero(obs))]
        xhat[np.ix_(rows, np.flatnonzero(mis))] = xo @ coef.T
        ccov = cov[np.ix_(mis, mis)] - tmp.T @ tmp
        extra[np.ix_(mis, mis)] += rows.size * ccov
    t = (xhat.T @ xhat + extra) / data.n
    return xhat, 0.5 * (t + t.T), jitter


def expected_suff_stats(data: MaskedDataset, params) -> SufficientStats:
    """``E[T | X_o]`` under the Gaussian implied by ``params``.

    ``params`` is a :class:`GaussianParams` or a covariance matrix.
    """
    _, t, jitter = conditional_expectations(data, params)
    if jitter:
        warnings.warn(f"{jitter} singular observed blocks regularized with jitter {JITTER}")
    return SufficientStats(t, data.n)


# ---------------------------------------------------------------------------
# Monte Carlo completion
# ---------------------------------------------------------------------------


class SamplerExhaustedError(RuntimeError):
    """Rejection sampling ran out of attempts for some rows."""

    def __init__(self, message, rows, attempts, accepts):
        super().__init__(message)
        self.rows = rows
        self.attempts = attempts
        self.accepts = accepts


@dataclass(frozen=True)
class ProposalDist:
    """Independent zero-mean Gaussian proposal over the missing coordinates."""

    variances: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.variances, dtype=float).copy()
        if np.any(v <= 0):
            raise ValueError("proposal variances must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "variances", v)

    @classmethod
    def from_data(cls, data: MaskedDataset, floor: float = 1e-6) -> "ProposalDist":
        """Second moments of the zero-imputed columns."""
        x = data.filled(0.0)
        return cls(np.maximum(np.mean(x * x, axis=0), floor))

    @property
    def scales(self) -> np.ndarray:
        return np.sqrt(self.variances)

    def widened(self, factor: float) -> "ProposalDist":
        """The same proposal with every standard deviation multiplied by ``factor``."""
        return ProposalDist(self.variances * factor ** 2)

    def logpdf(self, values, missing):
        """Log-density of the missing coordinates (``missing`` broadcasts against ``values``)."""
        z2 = values * values / self.variances
        terms = -0.5 * (LOG_2PI + np.log(self.variances) + z2)
        return np.sum(np.where(missing, terms, 0.0), axis=-1)


@dataclass(frozen=True)
class CompletionSet:
    """``samples[i, k]`` is the k-th completion of row ``i``."""

    samples: np.ndarray
    attempts: np.ndarray
    accepts: np.ndarray

    @property
    def ns(self) -> int:
        return self.samples.shape[1]

    def stacked(self) -> np.ndarray:
        n, ns, d = self.samples.shape
        return self.samples.reshape(n * ns, d)

    def weighted(self):
        """Rows and weights equivalent to :meth:`stacked` without the repeats.

        A fully observed row (never sampled) appears once with weight 1; each
        completion of an incomplete row carries weight ``1 / ns``.
        """
        sampled = self.attempts > 0
        x = np.concatenate([self.samples[~sampled, 0], self.samples[sampled].reshape(-1, self.samples.shape[2])])
        w = np.concatenate([np.ones((~sampled).sum()), np.full(sampled.sum() * self.ns, 1.0 / self.ns)])
        return x, w

    @property
    def acceptance_rate(self) -> float:
        total = self.attempts.sum()
        return float(self.accepts.sum() / total) if total else 1.0


def mc_complete(
    data: MaskedDataset,
    theta,
    ns: int,
    proposal: ProposalDist,
    rng,
    pilot: int = 256,
    safety: float = 1.5,
    max_attempts: int = 10_000,
    max_block: int = 4_000_000,
) -> CompletionSet:
    """Draw ``ns`` posterior completions per row by rejection sampling.

    Candidates for the missing cells come from ``proposal``; a candidate is
    accepted with probability ``p(x; theta) / (c_r q(x_m))``, where ``p`` is
    the model joint density and ``c_r`` a per-row envelope constant. ``c_r``
    starts at ``safety`` times the largest density ratio over ``pilot``
    proposal draws; a later draw that exceeds the envelope raises ``c_r`` and
    restarts that row.
    """
    if ns < 1:
        raise ValueError("ns must be >= 1")
    x0 = data.filled(0.0)
    n, d = x0.shape
    samples = np.repeat(x0[:, None, :], ns, axis=1)
    attempts = np.zeros(n, dtype=np.int64)
    accepts = np.zeros(n, dtype=np.int64)
    rows = np.flatnonzero(~data.y.all(axis=1))
    if rows.size == 0:
        return CompletionSet(samples, attempts, accepts)

    missing = ~data.y[rows]
    sd = proposal.scales
    log_safety = np.log(safety)

    def draw(idx, k):
        base = np.broadcast_to(x0[rows[idx], None, :], (idx.size, k, d))
        eps = rng.standard_normal((idx.size, k, d)) * sd
        cand = np.where(missing[idx, None, :], eps, base)
        ratio = joint_logdensity(theta, cand) - proposal.logpdf(cand, missing[idx, None, :])
        return cand, ratio

    _, ratio = draw(np.arange(rows.size), pilot)
    log_c = ratio.max(axis=1) + log_safety
    attempts[rows] += pilot
    filled = np.zeros(rows.size, dtype=np.int64)
    acc_rate = 0.5

    while True:
        active = np.flatnonzero(filled < ns)
        if active.size == 0:
            break
        over = active[attempts[rows[active]] > max_attempts * ns]
        if over.size:
            raise SamplerExhaustedError(
                f"rejection sampler exhausted on {over.size} rows; widen the proposal",
                rows[over], attempts[rows[over]].copy(), accepts[rows[over]].copy(),
            )
        need = ns - filled[active]
        k = int(np.clip(np.ceil(1.5 * need.max() / max(acc_rate, 1e-3)), 16, 2048))
        k = max(1, min(k, max_block // (active.size * d)))
        cand, ratio = draw(active, k)
        attempts[rows[active]] += k

        violated = ratio.max(axis=1) > log_c[active]
        if violated.any():
            bad = active[violated]
            log_c[bad] = ratio[violated].max(axis=1) + log_safety
            accepts[rows[bad]] -= filled[bad]
            filled[bad] = 0
            log.debug("envelope raised on %d rows", bad.size)

        accept = np.log(rng.uniform(size=ratio.shape)) < ratio - log_c[active, None]
        accept[violated] = False
        acc_rate = max(accept.mean(), 1e-4)
        rank = np.cumsum(accept, axis=1)
        take = accept & (rank <= need[:, None])
        r_idx, c_idx = np.nonzero(take)
        slot = filled[active[r_idx]] + rank[r_idx, c_idx] - 1
        samples[rows[active[r_idx]], slot] = cand[r_idx, c_idx]
        got = take.sum(axis=1)
        filled[active] += got
        accepts[rows[active]] += got

    return CompletionSet(samples, attempts, accepts)


def mc_q_value(completions: CompletionSet, theta, base=None) -> float:
    """Monte Carlo estimate of the expected complete-data log-likelihood.

    Averages over the ``ns`` completions of each row and sums over rows.
    With ``base`` the standardized likelihood is used, otherwise the model's
    own noise density.
    """
    x = completions.stacked()
    if base is None:
        return float(np.sum(joint_logdensity(theta, x)) / completions.ns)
    return standardized_loglik(theta, x, base) / completions.ns
