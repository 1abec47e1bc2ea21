"""Linked survey-register earnings panels.

Simulation of income panels with non-classical measurement error,
harmonization of register spells with survey responses, sample
restriction bookkeeping, balanced-panel construction, reliability and
bias estimators, and error-distribution summaries. A batch CLI wraps
the whole pipeline; see `earnlink.cli`.
"""
from .balancing import BalanceSpec, assign_event_time, build_balanced
from .dgp import (
    DgpConfig,
    ErrorProcessParams,
    IncomeProcessParams,
    OracleValues,
    OutcomeSpec,
    oracle,
    simulate_panel,
)
from .distribution import (
    ErrorSummary,
    GroupSummary,
    HistogramSeries,
    QuantileProfile,
    histogram,
    quantile_profile,
    summarize_errors,
    weighted_group_summary,
)
from .estimators import (
    BiasRegime,
    MomentMatrix,
    RegressionResult,
    ReliabilityEstimate,
    ReliabilityReport,
    bias_regime,
    joint_f_test,
    moment_matrix,
    ols_fit,
    reliability_classical,
    reliability_regression,
    reliability_report,
)
from .exceptions import ConfigurationError, DataError, EarnlinkError, EstimationError
from .harmonize import (
    DAYS_PER_MONTH,
    LedgerEntry,
    RegisterSpell,
    RestrictionConfig,
    RestrictionLedger,
    SurveyResponse,
    apply_restrictions,
    daily_to_monthly,
    link_surveys_to_register,
    select_main_spell,
)
from .panel_core import (
    ErrorTriple,
    LinkedObservation,
    Panel,
    compute_error_triple,
    panel_from_records,
    read_panel_csv,
    write_panel_csv,
)

__version__ = "0.1.0"

__all__ = [
    "BalanceSpec",
    "BiasRegime",
    "ConfigurationError",
    "DAYS_PER_MONTH",
    "DataError",
    "DgpConfig",
    "EarnlinkError",
    "ErrorProcessParams",
    "ErrorSummary",
    "ErrorTriple",
    "EstimationError",
    "GroupSummary",
    "HistogramSeries",
    "IncomeProcessParams",
    "LedgerEntry",
    "LinkedObservation",
    "MomentMatrix",
    "OracleValues",
    "OutcomeSpec",
    "Panel",
    "QuantileProfile",
    "RegisterSpell",
    "RegressionResult",
    "ReliabilityEstimate",
    "ReliabilityReport",
    "RestrictionConfig",
    "RestrictionLedger",
    "SurveyResponse",
    "apply_restrictions",
    "assign_event_time",
    "bias_regime",
    "build_balanced",
    "compute_error_triple",
    "daily_to_monthly",
    "histogram",
    "joint_f_test",
    "link_surveys_to_register",
    "moment_matrix",
    "ols_fit",
    "oracle",
    "panel_from_records",
    "quantile_profile",
    "read_panel_csv",
    "reliability_classical",
    "reliability_regression",
    "reliability_report",
    "select_main_spell",
    "simulate_panel",
    "summarize_errors",
    "weighted_group_summary",
    "write_panel_csv",
    "__version__",
]
