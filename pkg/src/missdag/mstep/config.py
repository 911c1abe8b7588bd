from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

METHODS = ("hard_al", "soft", "exhaustive")
MODEL_CLASSES = ("linear_gaussian_ev", "linear_gaussian_nv", "linear_logcosh", "mlp_anm")

# (lambda1, lambda2) per (method, model class); lambda2 is the soft DAG
# weight for "soft" and the l2 weight decay for the MLP
_DEFAULT_LAMBDAS = {
    ("hard_al", "linear_gaussian_ev"): (0.1, 0.0),
    ("hard_al", "linear_gaussian_nv"): (0.1, 0.0),
    ("hard_al", "linear_logcosh"): (0.1, 0.0),
    ("hard_al", "mlp_anm"): (0.03, 0.01),
    ("soft", "linear_gaussian_ev"): (5e-2, 5e-3),
    ("soft", "linear_gaussian_nv"): (5e-2, 5e-3),
    ("soft", "linear_logcosh"): (5e-2, 5e-3),
}


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of one M-step solver.

    ``rho0 = 0`` means the first sub-problem is unconstrained; the first
    penalty increase then jumps to ``rho = 1``. ``edge_penalty`` is the
    per-edge cost of the exhaustive search (``None`` means BIC,
    ``log(n) / (2 n)``).
    """

    method: str = "hard_al"
    model_class: str = "linear_gaussian_ev"
    lambda1: float = 0.1
    lambda2: float = 0.0
    alpha0: float = 0.0
    rho0: float = 0.0
    beta: float = 10.0
    gamma: float = 0.25
    h_min: float = 1e-8
    rho_max: float = 1e16
    max_outer: int = 100
    threshold: float = 0.3
    include_logdet: bool = False
    hidden: int = 10
    gtol: float = 1e-6
    max_inner: int = 15_000
    seed: int = 0
    warm_start: bool = True
    edge_penalty: Optional[float] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.model_class not in MODEL_CLASSES:
            raise ValueError(f"model_class must be one of {MODEL_CLASSES}, got {self.model_class!r}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("penalty coefficients must be >= 0")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.beta <= 1:
            raise ValueError("beta must exceed 1")
        if self.method == "exhaustive" and not self.model_class.startswith("linear_gaussian"):
            raise ValueError("exhaustive search is only available for linear Gaussian models")
        if self.method == "soft" and self.model_class == "mlp_anm":
            raise ValueError("the soft-constraint solver does not support the MLP model")
        if self.edge_penalty is not None and self.edge_penalty < 0:
            raise ValueError("edge_penalty must be >= 0")
        if self.include_logdet and self.method != "soft":
            raise ValueError("include_logdet only applies to the soft solver")

    @classmethod
    def default(cls, model_class: str = "linear_gaussian_ev", method: str = "hard_al", **overrides) -> "SolverConfig":
        """Preset penalties for ``(method, model_class)``.

        The soft preset includes the log-determinant term: its weak DAG
        penalty leaves the solution cyclic, where the term is not zero.
        """
        lam1, lam2 = _DEFAULT_LAMBDAS.get((method, model_class), (0.1, 0.0))
        kwargs = dict(method=method, model_class=model_class, lambda1=lam1, lambda2=lam2)
        if method == "soft" and model_class.startswith("linear_gaussian"):
            kwargs["include_logdet"] = True
        kwargs.update(overrides)
        return cls(**kwargs)

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)

    @property
    def equal_variance(self) -> bool:
        return self.model_class == "linear_gaussian_ev"

    def edge_cost(self, n: int) -> float:
        """Per-edge penalty of the exhaustive search for ``n`` samples."""
        return np.log(n) / (2.0 * n) if self.edge_penalty is None else self.edge_penalty
