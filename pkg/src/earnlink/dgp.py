"""Synthetic linked-panel generator with closed-form oracles.

The latent log income X*_it follows an AR(1) around a person mean; the
survey report adds a measurement error

    u_it = error_mean + delta * (X*_it - E[X*]) + a_it + sum_c loading_c * c_i,

where a_it is a stationary AR(1) noise component and the c_i are independent
standard-normal person covariates. The register reports exp(X*), the survey
exp(X* + u). An optional outcome block generates Z* = alpha + beta X* + eps
together with a mismeasured outcome Z = Z* + eta, eta built from the same
error law applied to Z* (independent draws), so both the attenuation and the
dependent-variable bias predictions can be exercised on one panel.

Every random draw is addressed as (seed, unit, slot) through the counter
based generator in ``rng``; generation is therefore reproducible bit for bit
regardless of chunking or parallelism.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import rng
from .estimators import SIGN_PRESERVED, bias_regime
from .exceptions import ConfigurationError
from .panel_core import LinkedObservation, Panel, panel_from_records

# Slot layout for the per-unit substreams. Per-period slots advance from the
# base by the zero-based period index; the gap between bases caps n_periods.
_SLOT_UNIT_EFFECT = 0
_SLOT_SIGNAL_INIT = 1
_SLOT_ERROR_INIT = 2
_SLOT_OUTCOME_ERROR_INIT = 3
_SLOT_SIGNAL_INNOV = 100
_SLOT_ERROR_INNOV = 10_100
_SLOT_OUTCOME_RESID = 20_100
_SLOT_OUTCOME_ERROR_INNOV = 30_100
_SLOT_ATTRITION = 40_100
_SLOT_GAP = 50_100
_SLOT_COVARIATE = 60_100
MAX_PERIODS = 10_000

_DEFAULT_CHUNK = 16_384


@dataclass(frozen=True)
class IncomeProcessParams:
    """AR(1) log-income process X*_it = mean + mu_i + s_it.

    s_it = rho * s_{i,t-1} + xi_it with xi white noise of variance
    innovation_var; mu_i is a person effect with variance unit_effect_var.
    With start_at_stationary the initial s is drawn from the stationary
    distribution, so var(X*) = unit_effect_var + innovation_var/(1-rho^2) at
    every t; otherwise s starts at the first innovation.
    """

    rho: float
    innovation_var: float
    mean_log_income: float = 0.0
    unit_effect_var: float = 0.0
    start_at_stationary: bool = True

    def __post_init__(self) -> None:
        if not -1.0 < self.rho < 1.0:
            raise ConfigurationError(f"income rho must lie in (-1, 1), got {self.rho!r}")
        if self.innovation_var <= 0:
            raise ConfigurationError(
                f"income innovation_var must be > 0, got {self.innovation_var!r}"
            )
        if self.unit_effect_var < 0:
            raise ConfigurationError(
                f"unit_effect_var must be >= 0, got {self.unit_effect_var!r}"
            )

    @property
    def ar_variance(self) -> float:
        """Stationary variance of the AR component s."""
        return self.innovation_var / (1.0 - self.rho**2)

    @property
    def signal_variance(self) -> float:
        """Stationary cross-sectional variance of X*."""
        return self.unit_effect_var + self.ar_variance


@dataclass(frozen=True)
class ErrorProcessParams:
    """Measurement error law u = error_mean + delta (X* - E X*) + AR noise.

    ``noise_var`` is the stationary variance of the AR(1) noise component
    (autoregression coefficient error_rho). ``delta`` loads on the demeaned
    signal so error_mean stays E[u] whatever delta is; delta < 0 produces
    mean reversion. ``covariate_loadings`` adds loading * covariate terms for
    the named generated covariates, making the error differential.
    """

    delta: float = 0.0
    noise_var: float = 0.0
    error_mean: float = 0.0
    error_rho: float = 0.0
    covariate_loadings: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.noise_var < 0:
            raise ConfigurationError(f"noise_var must be >= 0, got {self.noise_var!r}")
        if not -1.0 < self.error_rho < 1.0:
            raise ConfigurationError(
                f"error_rho must lie in (-1, 1), got {self.error_rho!r}"
            )


@dataclass(frozen=True)
class OutcomeSpec:
    """Linear outcome Z* = alpha + beta X* + eps, eps iid N(0, residual_var)."""

    beta: float
    alpha: float = 0.0
    residual_var: float = 0.0

    def __post_init__(self) -> None:
        if self.residual_var < 0:
            raise ConfigurationError(
                f"residual_var must be >= 0, got {self.residual_var!r}"
            )

    @property
    def gamma(self) -> float:
        """First-difference model slope; identical to beta in this design."""
        return self.beta


@dataclass(frozen=True)
class DgpConfig:
    """Complete simulator configuration.

    ``covariate_names`` lists per-unit standard normal covariates to generate
    (the union with the error loadings' names is generated). Gaps and
    attrition act from the second period on: attrition removes the unit for
    good, a gap yields one non-employed period with missing incomes. Top
    coding censors the register income at the limit and flags the
    observation via the ``top_coded`` covariate.
    """

    n_units: int
    n_periods: int
    income: IncomeProcessParams
    error: ErrorProcessParams
    outcome: OutcomeSpec | None = None
    attrition_hazard: float = 0.0
    gap_hazard: float = 0.0
    top_code_limit: float | None = None
    seed: int = 0
    first_period: int = 2001
    covariate_names: Sequence[str] = ()

    def __post_init__(self) -> None:
        if self.n_units < 1:
            raise ConfigurationError(f"n_units must be >= 1, got {self.n_units!r}")
        if not 1 <= self.n_periods <= MAX_PERIODS:
            raise ConfigurationError(
                f"n_periods must be in [1, {MAX_PERIODS}], got {self.n_periods!r}"
            )
        for name, hazard in (
            ("attrition_hazard", self.attrition_hazard),
            ("gap_hazard", self.gap_hazard),
        ):
            if not 0.0 <= hazard <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {hazard!r}")
        if self.top_code_limit is not None and self.top_code_limit <= 0:
            raise ConfigurationError(
                f"top_code_limit must be > 0, got {self.top_code_limit!r}"
            )
        reserved = {"outcome_true", "outcome_obs", "top_coded"}
        clashes = reserved & (set(self.covariate_names) | set(self.error.covariate_loadings))
        if clashes:
            raise ConfigurationError(
                f"covariate name(s) {sorted(clashes)} are reserved for simulator outputs"
            )

    def all_covariate_names(self) -> tuple[str, ...]:
        """Deterministic order of every generated covariate."""
        return tuple(
            sorted(set(self.covariate_names) | set(self.error.covariate_loadings))
        )


@dataclass(frozen=True)
class OracleValues:
    """Closed-form quantities implied by a stationary configuration.

    lambda_level is the classical reliability ratio; lambda_fd is the plim of
    the first-difference OLS slope factor (it reduces to the textbook
    (1-rho) var X* / ((1-rho) var X* + var u) form for iid classical error
    and no unit effect). nonclassical_slope_factor multiplies beta in the
    cross-sectional OLS plim; dep_var_bias_factor = 1 + delta multiplies beta
    when the mismeasured outcome is regressed on the true signal.
    """

    lambda_level: float
    lambda_fd: float
    nonclassical_slope_factor: float
    dep_var_bias_factor: float
    sign_regime: str
    sigma2_signal: float
    sigma2_error: float
    cov_signal_error: float
    corr_signal_error: float


def oracle(cfg: DgpConfig) -> OracleValues:
    """Compute the closed forms for a stationary, loadings-free, uncensored
    configuration; anything else raises ConfigurationError."""
    if not cfg.income.start_at_stationary:
        raise ConfigurationError("oracle requires start_at_stationary income")
    if cfg.error.covariate_loadings:
        raise ConfigurationError("oracle requires no covariate loadings on the error")
    if cfg.top_code_limit is not None:
        raise ConfigurationError("oracle requires top_code_limit to be unset")

    income = cfg.income
    error = cfg.error
    sigma2_signal = income.signal_variance
    sigma2_u = error.delta**2 * sigma2_signal + error.noise_var
    cov_su = error.delta * sigma2_signal

    lambda_level = sigma2_signal / (sigma2_signal + sigma2_u)

    # First differences: the unit effect drops out, the AR signal component
    # contributes 2 (1 - rho) * ar_variance, and the error difference has
    # variance 2 delta^2 (1-rho) ar_var + 2 (1-error_rho) noise_var with
    # covariance delta * var(dX*) against the signal difference.
    var_d_signal = 2.0 * (1.0 - income.rho) * income.ar_variance
    var_d_u = (
        error.delta**2 * var_d_signal + 2.0 * (1.0 - error.error_rho) * error.noise_var
    )
    cov_d = error.delta * var_d_signal
    lambda_fd_den = var_d_signal + var_d_u + 2.0 * cov_d
    lambda_fd = (var_d_signal + cov_d) / lambda_fd_den if lambda_fd_den > 0 else float("nan")

    nonclassical_den = sigma2_signal + sigma2_u + 2.0 * cov_su
    nonclassical = (sigma2_signal + cov_su) / nonclassical_den

    if sigma2_u == 0.0:
        corr = 0.0
        regime = SIGN_PRESERVED
    else:
        corr = cov_su / math.sqrt(sigma2_signal * sigma2_u)
        regime = bias_regime(sigma2_signal, sigma2_u, corr).regime

    return OracleValues(
        lambda_level=float(lambda_level),
        lambda_fd=float(lambda_fd),
        nonclassical_slope_factor=float(nonclassical),
        dep_var_bias_factor=float(1.0 + error.delta),
        sign_regime=regime,
        sigma2_signal=float(sigma2_signal),
        sigma2_error=float(sigma2_u),
        cov_signal_error=float(cov_su),
        corr_signal_error=float(corr),
    )


def _stationary_ar(
    seed: int,
    units: np.ndarray,
    n_periods: int,
    rho: float,
    stationary_var: float,
    init_slot: int,
    innov_slot: int,
    start_at_stationary: bool = True,
) -> np.ndarray:
    """Simulate an AR(1) path per unit; returns (n_units, n_periods)."""
    out = np.empty((units.size, n_periods))
    if stationary_var == 0.0:
        out.fill(0.0)
        return out
    innovation_var = stationary_var * (1.0 - rho**2)
    init_sd = math.sqrt(stationary_var if start_at_stationary else innovation_var)
    out[:, 0] = init_sd * rng.standard_normal(seed, units, init_slot)
    innov_sd = math.sqrt(innovation_var)
    for p in range(1, n_periods):
        shock = innov_sd * rng.standard_normal(seed, units, innov_slot + p)
        out[:, p] = rho * out[:, p - 1] + shock
    return out


def _simulate_chunk(cfg: DgpConfig, lo: int, hi: int) -> list[LinkedObservation]:
    units = np.arange(lo, hi, dtype=np.uint64)
    n = units.size
    T = cfg.n_periods
    income = cfg.income
    error = cfg.error
    seed = cfg.seed

    mu = (
        math.sqrt(income.unit_effect_var) * rng.standard_normal(seed, units, _SLOT_UNIT_EFFECT)
        if income.unit_effect_var > 0
        else np.zeros(n)
    )
    s = _stationary_ar(
        seed,
        units,
        T,
        income.rho,
        income.ar_variance,
        _SLOT_SIGNAL_INIT,
        _SLOT_SIGNAL_INNOV,
        income.start_at_stationary,
    )
    x_star = income.mean_log_income + mu[:, None] + s

    noise = _stationary_ar(
        seed, units, T, error.error_rho, error.noise_var, _SLOT_ERROR_INIT, _SLOT_ERROR_INNOV
    )
    covariate_names = cfg.all_covariate_names()
    covariate_values = {
        name: rng.standard_normal(seed, units, _SLOT_COVARIATE + j)
        for j, name in enumerate(covariate_names)
    }
    u = error.error_mean + error.delta * (x_star - income.mean_log_income) + noise
    for name, loading in error.covariate_loadings.items():
        u = u + loading * covariate_values[name][:, None]

    log_survey = x_star + u
    survey = np.exp(log_survey)
    register = np.exp(x_star)

    outcome_true = outcome_obs = None
    if cfg.outcome is not None:
        spec = cfg.outcome
        eps = np.empty((n, T))
        resid_sd = math.sqrt(spec.residual_var)
        for p in range(T):
            eps[:, p] = resid_sd * rng.standard_normal(seed, units, _SLOT_OUTCOME_RESID + p)
        outcome_true = spec.alpha + spec.beta * x_star + eps
        outcome_noise = _stationary_ar(
            seed,
            units,
            T,
            error.error_rho,
            error.noise_var,
            _SLOT_OUTCOME_ERROR_INIT,
            _SLOT_OUTCOME_ERROR_INNOV,
        )
        mean_outcome = spec.alpha + spec.beta * income.mean_log_income
        eta = error.error_mean + error.delta * (outcome_true - mean_outcome) + outcome_noise
        outcome_obs = outcome_true + eta

    # Exit and gap indicators; neither can strike the first period.
    exit_from = np.full(n, T, dtype=np.int64)
    gap = np.zeros((n, T), dtype=bool)
    if T > 1 and cfg.attrition_hazard > 0:
        for p in range(1, T):
            hit = rng.uniform(seed, units, _SLOT_ATTRITION + p) < cfg.attrition_hazard
            exit_from = np.where(hit & (exit_from == T), p, exit_from)
    if T > 1 and cfg.gap_hazard > 0:
        for p in range(1, T):
            gap[:, p] = rng.uniform(seed, units, _SLOT_GAP + p) < cfg.gap_hazard

    top_limit = cfg.top_code_limit
    width = len(str(max(cfg.n_units - 1, 1)))
    width = max(width, 6)
    records: list[LinkedObservation] = []
    for i in range(n):
        unit_id = f"u{int(units[i]):0{width}d}"
        base_covs = {name: float(values[i]) for name, values in covariate_values.items()}
        for p in range(int(exit_from[i])):
            period = cfg.first_period + p
            if gap[i, p]:
                records.append(
                    LinkedObservation(
                        unit_id=unit_id,
                        period=period,
                        survey_income=None,
                        register_income=None,
                        employed=False,
                        covariates=dict(base_covs),
                    )
                )
                continue
            covs = dict(base_covs)
            if outcome_true is not None:
                covs["outcome_true"] = float(outcome_true[i, p])
                covs["outcome_obs"] = float(outcome_obs[i, p])
            register_income = float(register[i, p])
            if top_limit is not None:
                censored = register_income > top_limit
                covs["top_coded"] = 1.0 if censored else 0.0
                if censored:
                    register_income = float(top_limit)
            records.append(
                LinkedObservation(
                    unit_id=unit_id,
                    period=period,
                    survey_income=float(survey[i, p]),
                    register_income=register_income,
                    employed=True,
                    covariates=covs,
                )
            )
    return records


def simulate_panel(cfg: DgpConfig, *, workers: int = 1, chunk_size: int | None = None) -> Panel:
    """Simulate a linked panel; identical output for any workers/chunk_size.

    The panel is generated in unit chunks. Because every draw is a pure
    function of (seed, unit, slot), neither the chunk size nor the number of
    worker threads can change a single value; both knobs exist for memory
    and throughput control only.
    """
    if workers < 1:
        raise ConfigurationError(f"workers must be >= 1, got {workers!r}")
    size = chunk_size or _DEFAULT_CHUNK
    if size < 1:
        raise ConfigurationError(f"chunk_size must be >= 1, got {chunk_size!r}")
    bounds = [(lo, min(lo + size, cfg.n_units)) for lo in range(0, cfg.n_units, size)]
    if workers == 1 or len(bounds) == 1:
        chunks = [_simulate_chunk(cfg, lo, hi) for lo, hi in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda b: _simulate_chunk(cfg, b[0], b[1]), bounds))
    records: list[LinkedObservation] = []
    for chunk in chunks:
        records.extend(chunk)
    return panel_from_records(records)
