import numpy as np
import pytest
from scipy import stats
from scipy.special import zeta

from missdag.core import NoiseSpec, is_acyclic
from missdag.datagen import (
    GraphSpec, MissingnessSpec, apply_missingness, make_noise_spec, make_sem,
    random_mlp_sem, sample_graph, sample_noise, sample_weights, simulate_sem,
)
from missdag.likelihood import NoiseDensity
from missdag.models import LinearSem, MlpSem


# --- graphs -----------------------------------------------------------------

@pytest.mark.parametrize("model,k", [("ER", 1), ("ER", 2), ("SF", 2)])
def test_graphs_acyclic(model, k):
    for seed in range(30):
        adj = sample_graph(GraphSpec(10, k, model, seed))
        assert is_acyclic(adj)
        assert np.all(np.diag(adj) == 0)


def test_er_edge_count():
    for seed in range(20):
        assert sample_graph(GraphSpec(10, 1, "ER", seed)).sum() == 10
        assert sample_graph(GraphSpec(10, 2, "ER", seed)).sum() == 20


def test_two_nodes_single_edge():
    adj = sample_graph(GraphSpec(2, 1, "ER", 0))
    assert adj.sum() == 1 and is_acyclic(adj)


def test_er_saturates_at_complete_dag():
    adj = sample_graph(GraphSpec(4, 3, "ER", 1))
    assert adj.sum() == 6 and is_acyclic(adj)


def test_graph_seed_determinism():
    a = sample_graph(GraphSpec(12, 2, "SF", 7))
    b = sample_graph(GraphSpec(12, 2, "SF", 7))
    assert np.array_equal(a, b)


def test_sf_edge_count():
    # Barabasi-Albert with k edges per new node: k (d - k) edges
    adj = sample_graph(GraphSpec(10, 2, "SF", 3))
    assert adj.sum() == 2 * (10 - 2)


def test_graph_spec_validation():
    with pytest.raises(ValueError):
        GraphSpec(1)
    with pytest.raises(ValueError):
        GraphSpec(5, 0.5)
    with pytest.raises(ValueError):
        GraphSpec(3, 3, "SF")
    with pytest.raises(ValueError):
        GraphSpec(5, 1, "XX")
    assert GraphSpec.parse("er2", 8) == GraphSpec(8, 2.0, "ER", 0)


# --- weights ----------------------------------------------------------------

def test_weight_magnitudes_and_signs():
    rng = np.random.default_rng(0)
    skel = np.triu(np.ones((150, 150), dtype=int), 1)
    w = sample_weights(skel, rng)
    vals = w[skel == 1]
    assert vals.size > 10_000
    assert np.all((np.abs(vals) >= 0.5) & (np.abs(vals) <= 2.0))
    assert np.mean(vals < 0) == pytest.approx(0.5, abs=0.02)
    assert np.all(w[skel == 0] == 0)


def test_empty_skeleton_zero_weights():
    assert np.all(sample_weights(np.zeros((4, 4)), np.random.default_rng(0)) == 0)


# --- simulation -------------------------------------------------------------

def test_linear_gaussian_variance():
    w = np.array([[0.0, 1.5], [0.0, 0.0]])
    x = simulate_sem(LinearSem(w, NoiseDensity("gaussian"), np.ones(2)), 10_000, np.random.default_rng(0))
    assert np.var(x[:, 1]) == pytest.approx(3.25, abs=0.15)


def test_empty_graph_independent_columns():
    n = 20_000
    x = simulate_sem(LinearSem(np.zeros((3, 3)), NoiseDensity("gaussian"), np.ones(3)), n, np.random.default_rng(1))
    c = np.corrcoef(x.T)
    assert np.all(np.abs(c[np.triu_indices(3, 1)]) < 4 / np.sqrt(n))


def test_gumbel_skewness():
    x = simulate_sem(LinearSem(np.zeros((1, 1)), NoiseDensity("gumbel"), np.ones(1)), 200_000, np.random.default_rng(2))
    expected = 12 * np.sqrt(6) * zeta(3) / np.pi ** 3
    assert expected == pytest.approx(1.1395, abs=1e-3)
    assert stats.skew(x[:, 0]) == pytest.approx(expected, abs=0.1)


@pytest.mark.parametrize("kind", ["gaussian", "laplace", "gumbel", "exponential"])
def test_noise_standardized(kind):
    z = sample_noise(NoiseDensity(kind), np.array([2.0]), 200_000, np.random.default_rng(3))
    assert z.mean() == pytest.approx(0.0, abs=0.03)
    assert z.std() == pytest.approx(2.0, rel=0.02)


def test_simulation_reproducible():
    rng_w = np.random.default_rng(4)
    skel = sample_graph(GraphSpec(6, 2, "ER", 4))
    sem = make_sem("linear", skel, make_noise_spec("gumbel", 6, rng_w), rng_w)
    a = simulate_sem(sem, 50, np.random.default_rng(9))
    b = simulate_sem(sem, 50, np.random.default_rng(9))
    assert np.array_equal(a, b)


def test_simulation_rejects_cycle():
    w = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ValueError):
        simulate_sem(LinearSem(w, NoiseDensity("gaussian"), np.ones(2)), 5, np.random.default_rng(0))


def test_non_equal_scales_range():
    spec = make_noise_spec("gaussian_nv", 50, np.random.default_rng(0))
    assert np.all((spec.scales >= 1.0) & (spec.scales <= 2.0))
    assert np.unique(spec.scales).size == 50
    assert np.all(make_noise_spec("gumbel", 5, np.random.default_rng(0)).scales == 1.0)


def test_mlp_sem_reads_only_parents():
    rng = np.random.default_rng(5)
    skel = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]])
    sem = random_mlp_sem(skel, NoiseSpec.equal("gaussian_ev", 3), rng, hidden=100)
    assert isinstance(sem, MlpSem) and sem.w1.shape == (3, 100, 3)
    x = rng.normal(size=(20, 3))
    base = sem.predict(x)
    x2 = x.copy()
    x2[:, 2] += 5.0  # node 2 is nobody's parent
    assert np.array_equal(sem.predict(x2), base)
    x3 = x.copy()
    x3[:, 0] += 1.0  # node 0 feeds node 1 only
    diff = np.abs(sem.predict(x3) - base).max(axis=0)
    assert diff[0] == 0 and diff[2] == 0 and diff[1] > 0
    assert np.all(np.abs(sem.w1[sem.w1 != 0]) >= 0.5)
    assert np.array_equal(sem.adjacency != 0, skel != 0)


# --- missingness ------------------------------------------------------------

def _x(n=1000, d=10, seed=0):
    return np.random.default_rng(seed).normal(size=(n, d))


def test_rate_zero_keeps_everything():
    data = apply_missingness(_x(), MissingnessSpec("MCAR", 0.0), np.random.default_rng(0))
    assert data.is_complete


def test_mcar_rate():
    data = apply_missingness(_x(10_000, 10), MissingnessSpec("MCAR", 0.3), np.random.default_rng(1))
    assert data.missing_rate == pytest.approx(0.3, abs=0.01)
    assert data.y.any(axis=1).all()


def test_mcar_independent_of_values():
    x = _x(10_000, 10, 2)
    data = apply_missingness(x, MissingnessSpec("MCAR", 0.3), np.random.default_rng(2))
    r = np.corrcoef(data.y.ravel().astype(float), x.ravel())[0, 1]
    assert abs(r) < 4 / np.sqrt(x.size)


@pytest.mark.parametrize("mech", ["MAR", "MNAR"])
def test_mar_mnar_fully_observed_columns_and_rate(mech):
    x = _x(5000, 10, 3)
    data = apply_missingness(x, MissingnessSpec(mech, 0.2), np.random.default_rng(3))
    full = data.y.all(axis=0)
    assert full.sum() == 3
    maskable = ~data.y[:, ~full]
    assert maskable.mean() == pytest.approx(0.2, abs=0.01)


def test_mar_depends_on_observed_values():
    x = _x(20_000, 4, 4)
    w = np.array([[2.0, 2.0, 2.0]])
    data = apply_missingness(x, MissingnessSpec("MAR", 0.3, 0.25, w), np.random.default_rng(4))
    full = np.flatnonzero(data.y.all(axis=0))
    assert full.size == 1
    masked_any = ~data.y.all(axis=1)
    # positive weights: rows with large driver values are masked more often
    assert x[masked_any, full[0]].mean() > x[~masked_any, full[0]].mean() + 0.3


def test_mnar_self_masking():
    x = _x(20_000, 4, 5)
    data = apply_missingness(x, MissingnessSpec("MNAR", 0.3, 0.25, np.full(3, 2.0)), np.random.default_rng(5))
    j = np.flatnonzero(~data.y.all(axis=0))[0]
    miss = ~data.y[:, j]
    assert x[miss, j].mean() > x[~miss, j].mean() + 0.5


def test_missingness_spec_validation():
    with pytest.raises(ValueError):
        MissingnessSpec("MCAR", 1.0)
    with pytest.raises(ValueError):
        MissingnessSpec("XYZ", 0.1)
