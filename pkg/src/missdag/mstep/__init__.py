"""M-step solvers: DAG-constrained score maximization."""

from .augmented import SolverTrace, augmented_lagrangian
from .config import METHODS, MODEL_CLASSES, SolverConfig
from .exhaustive import all_dags, fit_exhaustive_gaussian
from .linear import (
    FitResult,
    fit_linear_gaussian,
    fit_linear_logcosh,
    gaussian_objective,
    logcosh_objective,
    neg_logdet_term,
    profile_noise_variances,
)
from .mlp import fit_mlp_anm, mlp_fit_objective, mlp_h


def fit(cfg: SolverConfig, *, t=None, x=None, init=None, weights=None) -> FitResult:
    """Dispatch to the solver matching ``cfg``.

    Gaussian models take sufficient statistics ``t``; the others take a
    complete sample matrix ``x`` with optional row ``weights``. ``init`` is a
    warm start (a weight matrix, or an ``MlpSem`` for the MLP model).
    """
    if cfg.model_class.startswith("linear_gaussian"):
        if cfg.method == "exhaustive":
            return fit_exhaustive_gaussian(t, cfg)
        return fit_linear_gaussian(t, cfg, init)
    if cfg.model_class == "linear_logcosh":
        return fit_linear_logcosh(x, cfg, init, weights)
    return fit_mlp_anm(x, cfg, init, weights)


__all__ = [
    "FitResult", "METHODS", "MODEL_CLASSES", "SolverConfig", "SolverTrace",
    "all_dags", "augmented_lagrangian", "fit", "fit_exhaustive_gaussian",
    "fit_linear_gaussian", "fit_linear_logcosh", "fit_mlp_anm", "gaussian_objective",
    "logcosh_objective", "mlp_fit_objective", "mlp_h", "neg_logdet_term",
    "profile_noise_variances",
]
