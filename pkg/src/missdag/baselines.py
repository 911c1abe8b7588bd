"""Impute-then-discover baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MaskedDataset, SufficientStats
from .estep import conditional_expectations


@dataclass(frozen=True)
class ImputedDataset:
    """Completed matrix ``x``; ``imputed[i, j]`` marks cells that were filled in."""

    x: np.ndarray
    imputed: np.ndarray

    @property
    def n(self) -> int:
        return self.x.shape[0]


def _check_columns(data: MaskedDataset):
    empty = np.flatnonzero(~data.y.any(axis=0))
    if empty.size:
        raise ValueError(f"columns {empty.tolist()} have no observed values")


def mean_impute(data: MaskedDataset) -> ImputedDataset:
    """Fill each missing cell with its column's observed mean."""
    _check_columns(data)
    means = np.nanmean(data.x, axis=0)
    x = np.where(data.y, data.x, means)
    return ImputedDataset(x, ~data.y)


def gaussian_em_impute(data: MaskedDataset, iters: int = 10, return_history: bool = False):
    """EM for a zero-mean Gaussian with an unrestricted covariance.

    The E-step is the same conditional-Gaussian computation MissDAG uses;
    the M-step just sets the covariance to the expected statistic ``T``.
    Missing cells are filled with their conditional means under the final
    covariance. Returns ``(ImputedDataset, SufficientStats)``, plus the list
    of ``T`` iterates (starting from the initial one) with ``return_history``.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    _check_columns(data)
    x0 = data.filled(0.0)
    counts = data.y.sum(axis=0)
    cov = np.diag(np.sum(x0 * x0, axis=0) / counts)
    history = [cov]
    for _ in range(iters):
        _, cov, _ = conditional_expectations(data, cov)
        history.append(cov)
    xhat, _, _ = conditional_expectations(data, cov)
    out = ImputedDataset(np.where(data.y, data.x, xhat), ~data.y), SufficientStats(cov, data.n)
    return (*out, history) if return_history else out


def listwise_delete(data: MaskedDataset) -> np.ndarray:
    """Rows without any missing cell; may have zero rows."""
    return data.x[data.y.all(axis=1)]
