"""Causal discovery from incomplete data by penalized EM over additive noise models."""

from .baselines import ImputedDataset, gaussian_em_impute, listwise_delete, mean_impute
from .core import (
    Cpdag, MaskedDataset, NoiseSpec, SufficientStats, WeightedDag, dag_to_cpdag,
    h_acyclicity, into_dag, is_acyclic, threshold_to_dag,
)
from .datagen import GraphSpec, MissingnessSpec, apply_missingness, sample_graph, sample_weights, simulate_sem
from .em import EmConfig, EmTrace, observed_loglik_gaussian, run_missdag
from .estep import CompletionSet, ProposalDist, expected_suff_stats, mc_complete, mc_q_value
from .likelihood import GaussianParams, NoiseDensity, gaussian_suffstat_loglik, joint_logdensity, standardized_loglik
from .metrics import StructureScore, cov_frobenius, shd, shd_cpdag
from .models import LinearSem, MlpSem, QuadraticSem
from .mstep import SolverConfig, fit_exhaustive_gaussian, fit_linear_gaussian, fit_linear_logcosh, fit_mlp_anm

__version__ = "0.1.0"
