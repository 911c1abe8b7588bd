import numpy as np
import pytest

from missdag.baselines import gaussian_em_impute, listwise_delete, mean_impute
from missdag.core import MaskedDataset
from missdag.datagen import MissingnessSpec, apply_missingness, simulate_sem
from missdag.em import observed_loglik_gaussian
from missdag.likelihood import GaussianParams, NoiseDensity
from missdag.models import LinearSem

from oracles import random_dag_weights


def _masked(d=10, n=1000, rate=0.1, seed=0):
    rng = np.random.default_rng(seed)
    w = random_dag_weights(d, rng, p=0.3)
    s = np.ones(d)
    x = simulate_sem(LinearSem(w, NoiseDensity("gaussian"), s), n, rng)
    return GaussianParams(w, s).implied_cov(), apply_missingness(x, MissingnessSpec("MCAR", rate), rng)


def test_mean_impute_example():
    data = MaskedDataset.from_array(np.array([[1.0, 5.0], [np.nan, 6.0], [3.0, 7.0]]))
    out = mean_impute(data)
    assert out.x[:, 0].tolist() == [1.0, 2.0, 3.0]
    assert out.imputed.tolist() == [[False, False], [True, False], [False, False]]


def test_mean_impute_identity_and_fixed_point():
    x = np.random.default_rng(1).normal(size=(20, 3))
    assert np.array_equal(mean_impute(MaskedDataset.from_array(x)).x, x)
    _, data = _masked(4, 100, 0.3, 2)
    out = mean_impute(data)
    assert np.allclose(out.x.mean(axis=0), np.nanmean(data.x, axis=0))


def test_fully_missing_column_rejected():
    data = MaskedDataset(np.ones((2, 2)), np.array([[1, 0], [1, 0]]))
    with pytest.raises(ValueError):
        mean_impute(data)
    with pytest.raises(ValueError):
        gaussian_em_impute(data)


def test_imputers_keep_observed_cells_bit_identical():
    _, data = _masked(5, 200, 0.3, 3)
    for out in (mean_impute(data), gaussian_em_impute(data)[0]):
        assert np.array_equal(out.x[data.y], data.x[data.y])
        assert np.isfinite(out.x).all()


def test_gaussian_em_complete_data():
    x = np.random.default_rng(4).normal(size=(50, 3))
    out, t = gaussian_em_impute(MaskedDataset.from_array(x), iters=1)
    assert np.allclose(t.t, x.T @ x / 50)
    assert np.array_equal(out.x, x)


def test_gaussian_em_recovers_distribution():
    cov, data = _masked(seed=5)
    _, t, hist = gaussian_em_impute(data, return_history=True)
    assert np.linalg.norm(t.t - cov) < np.linalg.norm(hist[0] - cov)


def test_gaussian_em_likelihood_monotone():
    _, data = _masked(6, 300, 0.3, 6)
    _, _, hist = gaussian_em_impute(data, iters=15, return_history=True)
    ll = [observed_loglik_gaussian(data, c) for c in hist]
    assert all(b >= a - 1e-9 for a, b in zip(ll, ll[1:]))


def test_gaussian_em_reproducible():
    _, data = _masked(4, 100, 0.2, 7)
    a, ta = gaussian_em_impute(data)
    b, tb = gaussian_em_impute(data)
    assert np.array_equal(a.x, b.x) and np.array_equal(ta.t, tb.t)
    with pytest.raises(ValueError):
        gaussian_em_impute(data, iters=0)


def test_listwise_delete():
    x = np.random.default_rng(8).normal(size=(10, 3))
    assert np.array_equal(listwise_delete(MaskedDataset.from_array(x)), x)
    x2 = x.copy()
    x2[np.arange(10), np.arange(10) % 3] = np.nan
    assert listwise_delete(MaskedDataset.from_array(x2)).shape == (0, 3)


def test_listwise_delete_survival_rate():
    rng = np.random.default_rng(9)
    kept = []
    for _ in range(200):
        data = apply_missingness(rng.normal(size=(100, 20)), MissingnessSpec("MCAR", 0.1), rng)
        kept.append(listwise_delete(data).shape[0])
    # binomial expectation 100 * 0.9**20 ~ 12.2; rows with everything masked are resampled,
    # which does not change this at d = 20
    assert np.mean(kept) == pytest.approx(100 * 0.9 ** 20, abs=1.0)
    assert np.std(kept) < 7
