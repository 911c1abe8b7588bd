import numpy as np
import pytest

import missdag.em as em
from missdag.core import MaskedDataset, SufficientStats
from missdag.datagen import MissingnessSpec, apply_missingness, simulate_sem
from missdag.em import EmConfig, observed_loglik_gaussian, observed_loglik_mc, run_missdag
from missdag.estep import ProposalDist, SamplerExhaustedError
from missdag.likelihood import GaussianParams, NoiseDensity
from missdag.models import LinearSem
from missdag.mstep import SolverConfig, fit, fit_linear_gaussian

from oracles import mvn_logpdf, random_dag_weights


def _linear_data(d=4, n=200, rate=0.2, seed=0, kind="gaussian"):
    rng = np.random.default_rng(seed)
    w = random_dag_weights(d, rng, p=0.5)
    x = simulate_sem(LinearSem(w, NoiseDensity(kind), np.ones(d)), n, rng)
    return w, x, apply_missingness(x, MissingnessSpec("MCAR", rate), rng)


# --- config -----------------------------------------------------------------

def test_em_config_validation():
    with pytest.raises(ValueError):
        EmConfig(em_iters=0)
    with pytest.raises(ValueError):
        EmConfig(ns=0)
    with pytest.raises(ValueError):
        EmConfig(init_cov="zero")
    with pytest.raises(ValueError):
        EmConfig(model_class="linear_logcosh", solver=SolverConfig())
    assert EmConfig(model_class="mlp_anm").solver.model_class == "mlp_anm"
    assert EmConfig().em_iters == 10 and EmConfig().ns == 10


# --- observed-data likelihood ----------------------------------------------

def test_observed_loglik_complete_equals_full():
    rng = np.random.default_rng(1)
    p = GaussianParams(random_dag_weights(3, rng), rng.uniform(0.5, 2, 3))
    x = rng.normal(size=(30, 3))
    expected = mvn_logpdf(x, p.implied_cov()).sum()
    assert observed_loglik_gaussian(MaskedDataset.from_array(x), p) == pytest.approx(expected, abs=1e-9)


def test_observed_loglik_marginal_example():
    data = MaskedDataset.from_array(np.array([[0.0, np.nan]]))
    assert observed_loglik_gaussian(data, np.eye(2)) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-12)


def test_observed_loglik_marginalizes():
    rng = np.random.default_rng(2)
    p = GaussianParams(random_dag_weights(3, rng), np.ones(3))
    cov = p.implied_cov()
    x = np.array([[0.4, np.nan, -1.0], [np.nan, np.nan, 2.0]])
    expected = mvn_logpdf(x[:1, [0, 2]], cov[np.ix_([0, 2], [0, 2])]).sum() + mvn_logpdf(x[1:, [2]], cov[2:, 2:]).sum()
    assert observed_loglik_gaussian(MaskedDataset.from_array(x), p) == pytest.approx(expected, abs=1e-10)


def test_observed_loglik_mc_matches_exact():
    _, _, data = _linear_data(3, 50, 0.3, seed=3)
    w = np.array([[0, 0.8, 0], [0, 0, 0.5], [0, 0, 0.0]])
    sem = LinearSem(w, NoiseDensity("gaussian"), np.ones(3))
    exact = observed_loglik_gaussian(data, GaussianParams(w, np.ones(3)))
    approx = observed_loglik_mc(data, sem, ProposalDist(np.full(3, 3.0)), np.random.default_rng(0), draws=4000)
    assert approx == pytest.approx(exact, abs=0.5)


# --- zero-missingness reduction --------------------------------------------

@pytest.mark.parametrize("model", ["linear_gaussian_ev", "linear_gaussian_nv"])
def test_zero_missing_gaussian_reduction(model):
    _, x, _ = _linear_data(4, 300, 0.0, seed=4)
    data = MaskedDataset.from_array(x)
    tr = run_missdag(data, EmConfig(model_class=model))
    ref = fit_linear_gaussian(SufficientStats.from_complete(x), SolverConfig.default(model))
    assert len(tr) == 1
    assert np.array_equal(tr.dag.weights, ref.dag.weights)


def test_zero_missing_logcosh_reduction():
    _, x, _ = _linear_data(3, 300, 0.0, seed=5, kind="laplace")
    tr = run_missdag(MaskedDataset.from_array(x), EmConfig(model_class="linear_logcosh"))
    ref = fit(SolverConfig.default("linear_logcosh"), x=x)
    assert np.array_equal(tr.dag.weights, ref.dag.weights)


# --- Gaussian EM ------------------------------------------------------------

def test_exhaustive_em_monotone():
    _, _, data = _linear_data(4, 200, 0.2, seed=6)
    solver = SolverConfig(method="exhaustive", edge_penalty=0.0)
    tr = run_missdag(data, EmConfig(em_iters=15, tol=0.0, solver=solver))
    seq = [tr.initial_loglik] + tr.loglik
    assert all(b >= a - 1e-9 for a, b in zip(seq, seq[1:]))


def test_exhaustive_em_penalized_score_monotone():
    _, _, data = _linear_data(4, 200, 0.2, seed=7)
    tr = run_missdag(data, EmConfig(em_iters=15, tol=0.0, solver=SolverConfig(method="exhaustive")))
    assert all(b >= a - 1e-9 for a, b in zip(tr.score, tr.score[1:]))


def test_early_stop():
    _, _, data = _linear_data(4, 200, 0.2, seed=8)
    solver = SolverConfig(method="exhaustive")
    assert len(run_missdag(data, EmConfig(em_iters=50, tol=1e-3, solver=solver))) < 50
    assert len(run_missdag(data, EmConfig(em_iters=7, tol=0.0, solver=solver))) == 7


def test_trace_reproducible_and_truth_distance(tmp_path):
    w, _, data = _linear_data(4, 150, 0.2, seed=9)
    a = run_missdag(data, EmConfig(em_iters=3, tol=0.0), truth=w)
    b = run_missdag(data, EmConfig(em_iters=3, tol=0.0), truth=w)
    assert a.loglik == b.loglik
    assert len(a.truth_distance) == 3
    a.to_csv(tmp_path / "a.csv", include_wall=False)
    b.to_csv(tmp_path / "b.csv", include_wall=False)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_text().splitlines()[0].startswith("iteration,loglik,score")


def test_pairwise_init_runs():
    _, _, data = _linear_data(4, 150, 0.3, seed=10)
    tr = run_missdag(data, EmConfig(em_iters=3, init_cov="pairwise"))
    assert np.isfinite(tr.loglik).all()


def test_m_step_failure_has_iteration_context(monkeypatch):
    _, _, data = _linear_data(3, 60, 0.2, seed=11)

    def boom(*args, **kwargs):
        raise FloatingPointError("bad")

    monkeypatch.setattr(em, "fit", boom)
    with pytest.raises(RuntimeError, match="iteration 1"):
        run_missdag(data, EmConfig())


# --- MCEM -------------------------------------------------------------------

def test_mcem_logcosh_runs_and_reproducible():
    _, _, data = _linear_data(3, 150, 0.2, seed=12, kind="laplace")
    cfg = EmConfig(model_class="linear_logcosh", em_iters=2, ns=3, seed=5)
    a = run_missdag(data, cfg)
    b = run_missdag(data, cfg)
    assert len(a) == 2
    assert a.loglik == b.loglik
    assert np.array_equal(a.dag.weights, b.dag.weights)
    assert 0 < a.acceptance[0] <= 1


def test_widening_retry_keeps_wider_proposal(monkeypatch):
    calls = []
    real = em.mc_complete

    def flaky(data, theta, ns, proposal, rng):
        calls.append(proposal.variances.copy())
        if len(calls) < 3:
            raise SamplerExhaustedError("no", np.array([0]), np.array([1]), np.array([0]))
        return real(data, theta, ns, proposal, rng)

    monkeypatch.setattr(em, "mc_complete", flaky)
    data = MaskedDataset.from_array(np.array([[np.nan, 1.0], [0.5, 0.2]]))
    sem = LinearSem(np.zeros((2, 2)), NoiseDensity("gaussian"), np.ones(2))
    _, proposal = em._complete_widening(data, sem, 2, ProposalDist(np.ones(2)), np.random.default_rng(0))
    assert np.allclose(calls[1], 4 * calls[0]) and np.allclose(calls[2], 16 * calls[0])
    assert np.allclose(proposal.variances, 16.0)


def test_widening_gives_up():
    def always(*args, **kwargs):
        raise SamplerExhaustedError("no", np.array([0]), np.array([1]), np.array([0]))

    with pytest.MonkeyPatch.context() as mp:
        mp.setattr(em, "mc_complete", always)
        with pytest.raises(SamplerExhaustedError):
            em._complete_widening(None, None, 1, ProposalDist(np.ones(1)), None, retries=2)
