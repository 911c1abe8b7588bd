"""Noise densities and log-likelihood evaluations.

All densities here are *standardized*: Gaussian, Laplace, Gumbel and
Exponential have zero mean and unit variance. The log-cosh density is the
fixed super-Gaussian prior ``0.5 * sech(z)**2``, used as-is.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .core import SufficientStats, h_acyclicity

LOG_2PI = float(np.log(2.0 * np.pi))
EULER_GAMMA = 0.5772156649015329
_GUMBEL_BETA = float(np.sqrt(6.0) / np.pi)
_GUMBEL_LOC = -EULER_GAMMA * _GUMBEL_BETA
_LAPLACE_B = float(1.0 / np.sqrt(2.0))

DENSITY_KINDS = ("gaussian", "logcosh", "laplace", "gumbel", "exponential")

# maps NoiseSpec families onto the matching standardized density
FAMILY_DENSITY = {
    "gaussian_ev": "gaussian",
    "gaussian_nv": "gaussian",
    "gumbel": "gumbel",
    "laplace": "laplace",
    "exponential": "exponential",
}


class DegenerateResidualError(ValueError):
    """A residual column has (near) zero variance."""


def logcosh(z):
    a = np.abs(z)
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


def _raw_logpdf(kind: str, z):
    z = np.asarray(z, dtype=float)
    if kind == "gaussian":
        return -0.5 * LOG_2PI - 0.5 * z * z
    if kind == "logcosh":
        return np.log(0.5) - 2.0 * logcosh(z)
    if kind == "laplace":
        return -np.log(2.0 * _LAPLACE_B) - np.abs(z) / _LAPLACE_B
    if kind == "gumbel":
        u = (z - _GUMBEL_LOC) / _GUMBEL_BETA
        with np.errstate(over="ignore"):
            return -np.log(_GUMBEL_BETA) - u - np.exp(-u)
    if kind == "exponential":
        with np.errstate(invalid="ignore"):
            return np.where(z > -1.0, -(z + 1.0), -np.inf)
    raise ValueError(f"unknown density kind {kind!r}")


@lru_cache(maxsize=None)
def _normalizer_check(kind: str) -> float:
    total, _ = integrate.quad(lambda z: np.exp(_raw_logpdf(kind, z)), -np.inf, np.inf)
    if abs(total - 1.0) > 1e-8:
        raise RuntimeError(f"{kind} density integrates to {total}, not 1")
    return total


@dataclass(frozen=True)
class NoiseDensity:
    kind: str

    def __post_init__(self):
        if self.kind not in DENSITY_KINDS:
            raise ValueError(f"unknown density kind {self.kind!r}")
        if self.kind == "logcosh":
            _normalizer_check(self.kind)

    @property
    def normalizer(self) -> float:
        """Multiplicative constant in front of the kernel (0.5 for log-cosh)."""
        return {
            "gaussian": 1.0 / np.sqrt(2.0 * np.pi),
            "logcosh": 0.5,
            "laplace": 1.0 / (2.0 * _LAPLACE_B),
            "gumbel": 1.0 / _GUMBEL_BETA,
            "exponential": 1.0,
        }[self.kind]

    def logpdf(self, z):
        return _raw_logpdf(self.kind, z)

    def dlogpdf(self, z):
        """Derivative of ``logpdf`` with respect to ``z``."""
        z = np.asarray(z, dtype=float)
        if self.kind == "gaussian":
            return -z
        if self.kind == "logcosh":
            return -2.0 * np.tanh(z)
        if self.kind == "laplace":
            return -np.sign(z) / _LAPLACE_B
        if self.kind == "gumbel":
            u = (z - _GUMBEL_LOC) / _GUMBEL_BETA
            return (np.exp(-u) - 1.0) / _GUMBEL_BETA
        return np.where(z > -1.0, -1.0, 0.0)


def density_for(family: str) -> NoiseDensity:
    return NoiseDensity(FAMILY_DENSITY[family])


def noise_logpdf(density: NoiseDensity, z):
    """Exact log-density of the standardized noise at ``z``."""
    return density.logpdf(z)


@dataclass(frozen=True)
class GaussianParams:
    """Linear Gaussian SEM parameters: weights ``w`` and noise *variances* ``sigma_z``."""

    w: np.ndarray
    sigma_z: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        s = np.broadcast_to(np.asarray(self.sigma_z, dtype=float), (w.shape[0],)).copy()
        if np.any(s <= 0):
            raise ValueError("noise variances must be strictly positive")
        w.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "sigma_z", s)

    @property
    def d(self) -> int:
        return self.w.shape[0]

    def implied_cov(self) -> np.ndarray:
        """``(I - W)^-T diag(sigma_z) (I - W)^-1``."""
        a = np.linalg.inv(np.eye(self.d) - self.w)
        cov = a.T @ np.diag(self.sigma_z) @ a
        return 0.5 * (cov + cov.T)


def _stats_matrix(t) -> np.ndarray:
    return t.t if isinstance(t, SufficientStats) else SufficientStats(t, 1).t


def gaussian_suffstat_loglik(t, params: GaussianParams) -> float:
    """Per-sample Gaussian log-likelihood expressed through ``T = X^T X / n``.

    ``-1/2 sum_j log(2 pi s_j) - 1/2 tr((I-W)^T T (I-W) diag(s)^-1)``; linear in ``T``.
    """
    t = _stats_matrix(t)
    m = np.eye(params.d) - params.w
    resid = np.einsum("ij,ik,kj->j", m, t, m)
    return float(-0.5 * np.sum(LOG_2PI + np.log(params.sigma_z)) - 0.5 * np.sum(resid / params.sigma_z))


def gaussian_suffstat_grad(t, params: GaussianParams) -> np.ndarray:
    """Gradient of :func:`gaussian_suffstat_loglik` with respect to ``W``."""
    t = _stats_matrix(t)
    m = np.eye(params.d) - params.w
    return t @ m / params.sigma_z


def _check_numerically_acyclic(theta, tol: float) -> None:
    h, _ = h_acyclicity(theta.adjacency)
    if h > tol:
        raise ValueError(f"model graph is cyclic (h = {h:.3g})")


def joint_logdensity(theta, rows, acyclic_tol: float = 1e-6):
    """Log-density of complete rows under an acyclic additive-noise model.

    Acyclicity makes ``|det(I - J_f)| = 1``, so only the noise terms remain:
    ``sum_j log p(r_j / s_j) - log s_j`` with ``r = x - f(x)``. Works on any
    ``(..., d)`` array. ``acyclic_tol`` bounds the trace-exponential measure
    of the model graph; solver outputs carry tiny non-zero weights, so exact
    pattern acyclicity is not required.
    """
    _check_numerically_acyclic(theta, acyclic_tol)
    rows = np.asarray(rows, dtype=float)
    z = (rows - theta.predict(rows)) / theta.scales
    return np.sum(theta.density.logpdf(z) - np.log(theta.scales), axis=-1)


def residual_scales(resid, eps: float = 1e-8, weights=None) -> np.ndarray:
    """(Weighted) root mean square of each residual column; raises on degenerate columns."""
    var = np.average(np.asarray(resid) ** 2, axis=0, weights=weights)
    bad = np.flatnonzero(var <= eps)
    if bad.size:
        raise DegenerateResidualError(f"residual variance <= {eps} in columns {bad.tolist()}")
    return np.sqrt(var)


def standardized_loglik(model, x, base: NoiseDensity, eps: float = 1e-8) -> float:
    """Log-likelihood of residuals rescaled by their empirical scale.

    ``model`` is a fitted SEM (anything with ``predict``) or a callable
    returning ``f(x)``. Sums over rows and nodes.
    """
    x = np.asarray(x, dtype=float)
    f = model.predict(x) if hasattr(model, "predict") else model(x)
    resid = x - f
    s = residual_scales(resid, eps)
    return float(np.sum(base.logpdf(resid / s)) - x.shape[0] * np.sum(np.log(s)))
