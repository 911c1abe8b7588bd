"""The MissDAG EM loop: alternate posterior completion and DAG-constrained fitting."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .core import MaskedDataset, SufficientStats, WeightedDag, h_acyclicity
from .estep import JITTER, ProposalDist, SamplerExhaustedError, conditional_expectations, mc_complete
from .likelihood import LOG_2PI, GaussianParams, NoiseDensity, joint_logdensity
from .models import LinearSem, MlpSem
from .mstep import FitResult, SolverConfig, fit

log = logging.getLogger(__name__)

INIT_COVS = ("diagonal", "pairwise")


@dataclass(frozen=True)
class EmConfig:
    """EM hyperparameters.

    ``tol`` is the relative change in observed log-likelihood below which
    the Gaussian EM stops early (0 disables early stopping). ``ns`` is the
    number of Monte Carlo completions per row for the non-Gaussian models.
    """

    em_iters: int = 10
    model_class: str = "linear_gaussian_ev"
    ns: int = 10
    solver: Optional[SolverConfig] = None
    seed: int = 0
    tol: float = 1e-6
    init_cov: str = "diagonal"
    loglik_draws: int = 100

    def __post_init__(self):
        if self.em_iters < 1:
            raise ValueError("em_iters must be >= 1")
        if self.ns < 1:
            raise ValueError("ns must be >= 1")
        if self.init_cov not in INIT_COVS:
            raise ValueError(f"init_cov must be one of {INIT_COVS}")
        if self.solver is None:
            object.__setattr__(self, "solver", SolverConfig.default(self.model_class, seed=self.seed))
        elif self.solver.model_class != self.model_class:
            raise ValueError(
                f"solver model class {self.solver.model_class!r} does not match {self.model_class!r}"
            )

    @property
    def gaussian(self) -> bool:
        return self.model_class.startswith("linear_gaussian")


@dataclass
class EmTrace:
    """Per-iteration diagnostics of one EM run plus its final estimate."""

    loglik: list = field(default_factory=list)
    score: list = field(default_factory=list)
    h: list = field(default_factory=list)
    n_edges: list = field(default_factory=list)
    wall: list = field(default_factory=list)
    acceptance: list = field(default_factory=list)
    jitter: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    params: list = field(default_factory=list)
    truth_distance: list = field(default_factory=list)
    initial_loglik: float = float("nan")
    initial_params: object = None
    dag: Optional[WeightedDag] = None
    fit: Optional[FitResult] = None

    def __len__(self) -> int:
        return len(self.loglik)

    def rows(self, include_wall: bool = True) -> list:
        out = []
        for t in range(len(self)):
            row = {
                "iteration": t + 1,
                "loglik": self.loglik[t],
                "score": self.score[t],
                "h": self.h[t],
                "n_edges": self.n_edges[t],
                "acceptance": self.acceptance[t],
                "jitter": self.jitter[t],
            }
            if self.truth_distance:
                row["truth_distance"] = self.truth_distance[t]
            if include_wall:
                row["wall"] = self.wall[t]
            out.append(row)
        return out

    def to_csv(self, path, include_wall: bool = True) -> None:
        rows = self.rows(include_wall)
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["iteration"], lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


# ---------------------------------------------------------------------------
# observed-data likelihoods
# ---------------------------------------------------------------------------


def observed_loglik_gaussian(data: MaskedDataset, params) -> float:
    """Sum over rows of ``log N(x_o; 0, Sigma_oo)``.

    ``params`` is a :class:`GaussianParams` or a covariance matrix.
    """
    cov = params.implied_cov() if isinstance(params, GaussianParams) else np.asarray(params, dtype=float)
    x = data.filled(0.0)
    total = 0.0
    for obs, rows in data.patterns():
        idx = np.flatnonzero(obs)
        s = cov[np.ix_(idx, idx)]
        try:
            chol = np.linalg.cholesky(s)
        except np.linalg.LinAlgError:
            chol = np.linalg.cholesky(s + JITTER * np.eye(idx.size))
        z = np.linalg.solve(chol, x[np.ix_(rows, idx)].T)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        total += -0.5 * (rows.size * (idx.size * LOG_2PI + logdet) + np.sum(z * z))
    return float(total)


def observed_loglik_mc(data: MaskedDataset, theta, proposal: ProposalDist, rng, draws: int = 100) -> float:
    """Importance-sampling estimate of ``sum_i log p(x_o,i)`` using ``proposal`` for missing cells."""
    x0 = data.filled(0.0)
    complete = data.y.all(axis=1)
    total = float(np.sum(joint_logdensity(theta, x0[complete]))) if complete.any() else 0.0
    rows = np.flatnonzero(~complete)
    for chunk in np.array_split(rows, max(1, rows.size * draws * data.d // 2_000_000)):
        if chunk.size == 0:
            continue
        missing = ~data.y[chunk, None, :]
        eps = rng.standard_normal((chunk.size, draws, data.d)) * proposal.scales
        cand = np.where(missing, eps, x0[chunk, None, :])
        logw = joint_logdensity(theta, cand) - proposal.logpdf(cand, missing)
        total += float(np.sum(logsumexp(logw, axis=1) - np.log(draws)))
    return total


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _initial_cov(data: MaskedDataset, how: str) -> np.ndarray:
    x = data.filled(0.0)
    if how == "diagonal":
        return np.diag(np.sum(x * x, axis=0) / data.y.sum(axis=0))
    # pairwise-available second moments, projected onto the PSD cone
    y = data.y.astype(float)
    counts = np.maximum(y.T @ y, 1.0)
    cov = (x.T @ x) / counts
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    vals = np.maximum(vals, 1e-6 * max(vals.max(), 1e-12))
    return (vecs * vals) @ vecs.T


def _observed_scales(data: MaskedDataset) -> np.ndarray:
    x = data.filled(0.0)
    return np.sqrt(np.maximum(np.sum(x * x, axis=0) / data.y.sum(axis=0), 1e-8))


def _initial_model(cfg: EmConfig, data: MaskedDataset):
    d, scales = data.d, _observed_scales(data)
    if cfg.model_class == "linear_logcosh":
        return LinearSem(np.zeros((d, d)), NoiseDensity("logcosh"), scales)
    m = cfg.solver.hidden
    return MlpSem(np.zeros((d, m, d)), np.zeros((d, m)), np.zeros((d, m)), np.zeros(d), NoiseDensity("gaussian"), scales)


def _acyclic_model(model, dag: WeightedDag, tol: float = 1e-6):
    """``model`` itself if numerically acyclic, else restricted to the thresholded DAG."""
    if h_acyclicity(model.adjacency)[0] <= tol:
        return model
    log.warning("fitted model is numerically cyclic; using its thresholded structure for the E-step")
    keep = dag.weights != 0
    if isinstance(model, LinearSem):
        return LinearSem(np.where(keep, model.weights, 0.0), model.density, model.scales)
    return MlpSem(model.w1 * keep.T[:, None, :], model.b1, model.w2, model.b2, model.density, model.scales)


def _penalty(cfg: SolverConfig, fit_result: FitResult, n: int) -> float:
    w = fit_result.weights
    if cfg.method == "exhaustive":
        return cfg.edge_cost(n) * int(np.count_nonzero(w))
    return cfg.lambda1 * float(np.abs(w).sum())


def _gaussian_params(fit_result: FitResult) -> GaussianParams:
    return GaussianParams(fit_result.weights, fit_result.sigma_z)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def run_missdag(data: MaskedDataset, cfg: EmConfig, truth=None) -> EmTrace:
    """Run MissDAG EM and return its trace; ``trace.dag`` is the final graph.

    With complete data the E-step is the identity, so a single M-step on the
    data is run. ``truth`` (a weight matrix) adds a Frobenius distance of
    each iterate's raw weights to it.
    """
    if data.n == 0:
        raise ValueError("empty dataset")
    if cfg.gaussian:
        return _run_gaussian(data, cfg, truth)
    return _run_mcem(data, cfg, truth)


def _record(trace, fit_result, loglik, score, start, truth, acceptance=1.0, jitter=0):
    trace.loglik.append(loglik)
    trace.score.append(score)
    trace.h.append(float(fit_result.h))
    trace.n_edges.append(len(fit_result.dag.edges()))
    trace.wall.append(time.perf_counter() - start)
    trace.acceptance.append(acceptance)
    trace.jitter.append(jitter)
    trace.weights.append(np.array(fit_result.weights))
    if truth is not None:
        trace.truth_distance.append(float(np.linalg.norm(fit_result.weights - np.asarray(truth, dtype=float))))
    trace.fit = fit_result
    trace.dag = fit_result.dag


def _run_gaussian(data: MaskedDataset, cfg: EmConfig, truth) -> EmTrace:
    trace = EmTrace()
    cov = _initial_cov(data, cfg.init_cov)
    trace.initial_params = GaussianParams(np.zeros((data.d, data.d)), np.diag(cov)) if cfg.init_cov == "diagonal" else cov
    trace.initial_loglik = observed_loglik_gaussian(data, cov)
    w = None
    iters = 1 if data.is_complete else cfg.em_iters
    for it in range(iters):
        start = time.perf_counter()
        _, t, jitter = conditional_expectations(data, cov)
        try:
            fit_result = fit(cfg.solver, t=SufficientStats(t, data.n), init=w if cfg.solver.warm_start else None)
        except Exception as exc:
            raise RuntimeError(f"M-step failed at EM iteration {it + 1}: {exc}") from exc
        params = _gaussian_params(fit_result)
        cov = params.implied_cov()
        ll = observed_loglik_gaussian(data, params)
        _record(trace, fit_result, ll, ll / data.n - _penalty(cfg.solver, fit_result, data.n), start, truth, jitter=jitter)
        trace.params.append(params)
        w = fit_result.weights
        prev = trace.loglik[-2] if len(trace) > 1 else trace.initial_loglik
        if cfg.tol > 0 and len(trace) > 1 and abs(ll - prev) <= cfg.tol * abs(prev):
            log.info("EM converged after %d iterations", it + 1)
            break
    return trace


def _complete_widening(data, theta, ns, proposal, rng, retries: int = 4, factor: float = 2.0):
    """``mc_complete``, widening the proposal after each exhausted attempt.

    Posteriors of fitted nonlinear models can sit far in the tails of the
    moment-matched proposal. The widened proposal is kept for later iterations.
    """
    for attempt in range(retries + 1):
        try:
            return mc_complete(data, theta, ns, proposal, rng), proposal
        except SamplerExhaustedError as exc:
            if attempt == retries:
                raise
            log.info("sampler exhausted on %d rows; widening proposal by %g", exc.rows.size, factor)
            proposal = proposal.widened(factor)


def _run_mcem(data: MaskedDataset, cfg: EmConfig, truth) -> EmTrace:
    trace = EmTrace()
    rng = np.random.default_rng(cfg.seed)
    proposal = ProposalDist.from_data(data)
    theta = _initial_model(cfg, data)
    trace.initial_params = theta
    if data.is_complete:
        start = time.perf_counter()
        fit_result = fit(cfg.solver, x=data.x)
        ll = float(np.sum(joint_logdensity(_acyclic_model(fit_result.model, fit_result.dag), data.x)))
        trace.initial_loglik = float(np.sum(joint_logdensity(theta, data.x)))
        _record(trace, fit_result, ll, ll / data.n, start, truth)
        trace.params.append(fit_result.model)
        return trace

    trace.initial_loglik = observed_loglik_mc(data, theta, proposal, rng, cfg.loglik_draws)
    init = None
    for it in range(cfg.em_iters):
        start = time.perf_counter()
        try:
            completions, proposal = _complete_widening(data, theta, cfg.ns, proposal, rng)
            x, weights = completions.weighted()
            fit_result = fit(cfg.solver, x=x, weights=weights, init=init if cfg.solver.warm_start else None)
        except Exception as exc:
            raise RuntimeError(f"EM iteration {it + 1} failed: {exc}") from exc
        theta = _acyclic_model(fit_result.model, fit_result.dag)
        ll = observed_loglik_mc(data, theta, proposal, rng, cfg.loglik_draws)
        _record(trace, fit_result, ll, ll / data.n, start, truth, acceptance=completions.acceptance_rate)
        trace.params.append(theta)
        init = fit_result.model if cfg.model_class == "mlp_anm" else fit_result.weights
    return trace
