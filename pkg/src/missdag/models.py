"""Additive-noise SEMs: ``x_j = f_j(parents of j) + z_j``.

A model exposes ``predict(x)`` returning ``f(x)`` row-wise, an ``adjacency``
matrix (``[i, j]`` nonzero for i -> j), a standardized noise ``density`` and
per-node noise standard deviations ``scales``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .likelihood import NoiseDensity


@dataclass(frozen=True)
class LinearSem:
    weights: np.ndarray
    density: NoiseDensity
    scales: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        s = np.broadcast_to(np.asarray(self.scales, dtype=float), (w.shape[0],)).copy()
        w.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "scales", s)

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        return self.weights

    def predict(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.weights

    def jacobian(self, x=None) -> np.ndarray:
        """``J[j, k] = d f_j / d x_k``, constant for a linear model."""
        return self.weights.T.copy()


@dataclass(frozen=True)
class MlpSem:
    """One sigmoid hidden layer per node.

    ``w1[j, h, k]`` connects input ``k`` to hidden unit ``h`` of node ``j``;
    a zero slice ``w1[j, :, k]`` makes node ``j`` blind to ``k``.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    density: NoiseDensity
    scales: np.ndarray

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        d = self.w1.shape[0]
        if self.w1.shape[2] != d or self.b1.shape != self.w1.shape[:2] or self.w2.shape != self.b1.shape:
            raise ValueError("inconsistent MLP parameter shapes")
        s = np.broadcast_to(np.asarray(self.scales, dtype=float), (d,)).copy()
        s.setflags(write=False)
        object.__setattr__(self, "scales", s)

    @property
    def d(self) -> int:
        return self.w1.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        return np.sqrt(np.sum(self.w1 ** 2, axis=1)).T

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a = np.einsum("...k,jhk->...jh", x, self.w1) + self.b1
        return np.einsum("...jh,jh->...j", expit(a), self.w2) + self.b2

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = expit(np.einsum("k,jhk->jh", x, self.w1) + self.b1)
        return np.einsum("jh,jhk->jk", self.w2 * s * (1.0 - s), self.w1)


@dataclass(frozen=True)
class QuadraticSem:
    """Additive quadratic mechanisms: ``f_j(x) = sum_k weights[k, j] * x_k**2``."""

    weights: np.ndarray
    density: NoiseDensity
    scales: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        s = np.broadcast_to(np.asarray(self.scales, dtype=float), (w.shape[0],)).copy()
        w.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "scales", s)

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        return self.weights

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x * x) @ self.weights

    def jacobian(self, x) -> np.ndarray:
        return 2.0 * self.weights.T * np.asarray(x, dtype=float)[None, :]
