"""Sparse canonical correlation analysis: estimators, rate formulas, and Monte Carlo checks."""

from .errors import (
    DegenerateModelError,
    EnumerationBudgetError,
    EstimationFailure,
    FactorizationError,
    ModelConstructionError,
    NumericalError,
    SingularMatrixError,
    SupportConditioningError,
)
from .estimators import (
    DirectionEstimate,
    TruncatedEstimate,
    classical_cca,
    loss,
    loss_report,
    oracle_estimator,
    restricted_cca,
    sparse_approximation,
    sparse_cca,
    truncate,
)
from .harness import ExperimentConfig, RiskTable, fit_rate_slope, run_experiment
from .matcore import kyfan2, procrustes_distance, projection_distance, psd_sqrt_invsqrt, svd
from .model import (
    CcaModel,
    Covariance,
    EffectiveSparsity,
    ParamSpace,
    build_model,
    effective_sparsity,
    effective_support,
    minimax_rate,
    minimax_rate_individual,
    validate_membership,
    weak_lq_radius,
)
from .perturb import (
    linearloss_check,
    loss_decomposition,
    rank_sup_statistic,
    sintheta_check,
)
from .sampler import DataSet, SampleCov, sample, sample_covariance

__version__ = "0.1.0"
