"""Marked multivariate Hawkes toolkit for competing/cooperating adoption
cascades: simulation by thinning, per-user convex MLE with a log-barrier
interior-point solver, and evaluation metrics."""

from .data import Event, EventLog, concat_logs
from .fitting import FitConfig, FitReport, UserFitEntry, cross_validate_beta, fit_all, fit_user
from .likelihood import (
    EventFeatures,
    InfeasibleLikelihoodError,
    UserParams,
    build_all_features,
    build_features,
    log_sum_exp,
    total_nll,
    user_nll,
    user_nll_gradient,
    window_nll,
)
from .metrics import (
    CurveScoreRow,
    CurveSeries,
    MetricsReport,
    avg_pred_loglik,
    compare_models,
    inv_l1,
    param_mae,
    param_mse,
    pearson,
)
from .model import (
    DecayState,
    LinearMark,
    ModelParams,
    SoftMaxMark,
    UndefinedMarkError,
    compensator,
    decay_state_advance_and_absorb,
    decay_state_init,
    mark_density,
    mark_density_from_tendencies,
    tendency,
    tendency_vector,
    total_intensity,
)
from .replicate import (
    IncentivizationResult,
    IncentivizationRun,
    RecoveryResult,
    RecoveryRow,
    make_incentivization_model,
    make_recovery_model,
    run_incentivization,
    run_recovery,
)
from .simulate import (
    Scenario,
    ScenarioResult,
    SimConfig,
    SubcriticalityWarning,
    binned_intensity,
    market_share,
    rescaled_interevent_times,
    run_scenario,
    simulate,
)

__version__ = "0.1.0"
