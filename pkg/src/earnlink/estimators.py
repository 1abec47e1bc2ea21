"""Numerical core: OLS with robust inference, moment matrices, reliability
ratios, and the bias/plim calculators for mismeasured regressors.

Conventions used throughout:

* u denotes the log measurement error, log(survey) - log(register).
* The register log income is treated as the true signal; the survey log
  income is the mismeasured report.
* Robust standard errors are the HC1 sandwich, i.e. the White estimator with
  the n/(n-k) finite-sample correction (HC0 available via a switch). With
  sampling weights the sandwich is the survey-weighted analogue: bread
  (X'WX)^-1, meat sum_i (w_i e_i)^2 x_i x_i'.
* Linear systems are solved through a rank-revealing pivoted QR
  decomposition; columns whose pivot falls below 1e-10 times the largest
  column norm are reported as linearly dependent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.stats

from .exceptions import ConfigurationError, DataError, EstimationError
from .panel_core import Panel

_RANK_RTOL = 1e-10


@dataclass(frozen=True)
class RegressionResult:
    """An OLS fit with heteroskedasticity-consistent inference.

    ``coefficients`` and ``robust_se`` are keyed by column name ("const" for
    the intercept, "period_<year>" for year indicators). ``residuals`` aligns
    with the rows actually used in estimation (after listwise deletion);
    ``rows_used`` gives their indices into the input vectors. ``robust_cov``
    is the full sandwich matrix ordered like ``column_names``.
    """

    coefficients: dict[str, float]
    robust_se: dict[str, float]
    r_squared: float
    n_obs: int
    residuals: np.ndarray
    column_names: tuple[str, ...]
    robust_cov: np.ndarray
    rows_used: np.ndarray


def ols_fit(
    y,
    x: Mapping[str, np.ndarray],
    *,
    intercept: bool = True,
    year_fe: bool = False,
    periods=None,
    weights=None,
    hc0: bool = False,
) -> RegressionResult:
    """Least squares with HC1 (or HC0) robust standard errors.

    ``x`` maps column names to regressor vectors; insertion order is kept.
    ``year_fe=True`` expands ``periods`` into indicator columns, omitting the
    first (smallest) period. Rows with a missing value in y, any regressor,
    the period, or the weight are dropped listwise; rows with zero weight are
    dropped as well. Raises EstimationError on rank deficiency (naming a
    dependent column) or when no degrees of freedom remain.
    """
    y = np.asarray(y, dtype=float)
    names: list[str] = []
    columns: list[np.ndarray] = []
    for name, column in x.items():
        names.append(str(name))
        columns.append(np.asarray(column, dtype=float))
    for name, column in zip(names, columns):
        if column.shape != y.shape:
            raise DataError(
                f"regressor {name!r} has shape {column.shape}, expected {y.shape}"
            )

    keep = np.isfinite(y)
    for column in columns:
        keep &= np.isfinite(column)
    if year_fe:
        if periods is None:
            raise ConfigurationError("year_fe=True requires the periods vector")
        periods = np.asarray(periods)
        if periods.shape != y.shape:
            raise DataError("periods vector does not match y")
        keep &= np.isfinite(periods.astype(float))
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != y.shape:
            raise DataError("weights vector does not match y")
        if np.any(weights[np.isfinite(weights)] < 0):
            raise DataError("weights must be nonnegative")
        keep &= np.isfinite(weights) & (weights > 0)

    rows_used = np.flatnonzero(keep)
    y_used = y[rows_used]
    design_names: list[str] = []
    design_cols: list[np.ndarray] = []
    if intercept:
        design_names.append("const")
        design_cols.append(np.ones(rows_used.size))
    for name, column in zip(names, columns):
        design_names.append(name)
        design_cols.append(column[rows_used])
    if year_fe:
        periods_used = periods[rows_used]
        levels = np.unique(periods_used)
        for level in levels[1:]:
            label = int(level) if float(level).is_integer() else level
            design_names.append(f"period_{label}")
            design_cols.append((periods_used == level).astype(float))

    n = rows_used.size
    k = len(design_cols)
    if k == 0:
        raise ConfigurationError("no regressors (pass columns or intercept=True)")
    if n <= k:
        raise EstimationError(f"{n} observations cannot identify {k} coefficients")
    X = np.column_stack(design_cols)
    w = weights[rows_used] if weights is not None else None

    sqrt_w = np.sqrt(w) if w is not None else None
    Xw = X * sqrt_w[:, None] if sqrt_w is not None else X
    yw = y_used * sqrt_w if sqrt_w is not None else y_used

    q, r, piv = scipy.linalg.qr(Xw, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = _RANK_RTOL * np.linalg.norm(Xw, axis=0).max()
    rank = int(np.sum(diag > tol))
    if rank < k:
        dependent = design_names[piv[rank]]
        raise EstimationError(
            f"design matrix is rank deficient: column {dependent!r} is "
            f"linearly dependent on the others"
        )
    beta_piv = scipy.linalg.solve_triangular(r, q.T @ yw)
    beta = np.empty(k)
    beta[piv] = beta_piv

    residuals = y_used - X @ beta
    r_inv = scipy.linalg.solve_triangular(r, np.eye(k))
    bread_piv = r_inv @ r_inv.T
    bread = np.empty((k, k))
    bread[np.ix_(piv, piv)] = bread_piv

    meat_weights = (w * residuals) ** 2 if w is not None else residuals**2
    meat = X.T @ (X * meat_weights[:, None])
    vcov = bread @ meat @ bread
    if not hc0:
        vcov = vcov * (n / (n - k))
    se = np.sqrt(np.diag(vcov))

    if w is not None:
        total = w.sum()
        mean = (w * y_used).sum() / total
        ssr = float((w * residuals**2).sum())
        sst = float((w * (y_used - mean) ** 2).sum()) if intercept else float((w * y_used**2).sum())
    else:
        ssr = float((residuals**2).sum())
        sst = (
            float(((y_used - y_used.mean()) ** 2).sum()) if intercept else float((y_used**2).sum())
        )
    r_squared = 1.0 if sst == 0.0 else 1.0 - ssr / sst

    return RegressionResult(
        coefficients={name: float(b) for name, b in zip(design_names, beta)},
        robust_se={name: float(s) for name, s in zip(design_names, se)},
        r_squared=float(r_squared),
        n_obs=int(n),
        residuals=residuals,
        column_names=tuple(design_names),
        robust_cov=vcov,
        rows_used=rows_used,
    )


def joint_f_test(
    result: RegressionResult,
    exclude_intercept: bool = True,
    names: Sequence[str] | None = None,
) -> tuple[float, int, int, float]:
    """Robust Wald F-test of H0: the tested coefficients are jointly zero.

    By default every non-intercept coefficient is tested; pass ``names`` to
    test a subset. Returns (f_stat, df1, df2, p_value) with df2 = n - k and
    the p-value from the F(df1, df2) distribution.
    """
    if names is None:
        tested = [c for c in result.column_names if not (exclude_intercept and c == "const")]
    else:
        tested = list(names)
        unknown = [c for c in tested if c not in result.column_names]
        if unknown:
            raise ConfigurationError(f"unknown coefficients {unknown} in joint test")
    if not tested:
        raise ConfigurationError("joint test needs at least one coefficient")
    index = [result.column_names.index(c) for c in tested]
    b = np.array([result.coefficients[c] for c in tested])
    v = result.robust_cov[np.ix_(index, index)]
    try:
        solved = np.linalg.solve(v, b)
    except np.linalg.LinAlgError:
        raise EstimationError("restricted robust covariance is singular") from None
    df1 = len(tested)
    df2 = result.n_obs - len(result.column_names)
    f_stat = float(b @ solved) / df1
    if not math.isfinite(f_stat):
        raise EstimationError("joint F statistic is not finite")
    f_stat = max(f_stat, 0.0)
    p_value = float(scipy.stats.f.sf(f_stat, df1, df2))
    return f_stat, df1, df2, float(p_value)


# ------------------------------------------------------------ moment matrix


@dataclass(frozen=True)
class MomentMatrix:
    """Covariances and correlations of {log Y*_t, u_t} for t = 1..T.

    Variables are ordered log_register_t1..T then u_t1..T. In pairwise mode
    each covariance cell uses all units observed at both indices (denominator
    n-1) and each correlation uses that same cell sample's own variances, so
    the matrix is not forced positive semidefinite; ``n_eff`` holds the
    per-cell sample sizes. In balanced mode a single common sample is used
    and ``n_eff`` is a scalar. Correlations undefined because a variable is
    constant on the cell sample are reported as NaN.
    """

    horizon: int
    variables: tuple[str, ...]
    cov: np.ndarray
    corr: np.ndarray
    n_eff: np.ndarray | int
    mode: str

    def index(self, variable: str) -> int:
        return self.variables.index(variable)

    def cell(self, a: str, b: str, which: str = "cov") -> float:
        matrix = self.cov if which == "cov" else self.corr
        return float(matrix[self.index(a), self.index(b)])


def moment_variable_names(horizon: int) -> tuple[str, ...]:
    return tuple(
        [f"log_register_t{t}" for t in range(1, horizon + 1)]
        + [f"u_t{t}" for t in range(1, horizon + 1)]
    )


def _event_matrix(panel: Panel, horizon: int) -> np.ndarray:
    """Per-unit rows of [log Y*_1..T, u_1..T], NaN where unobserved."""
    if panel.event_index is None:
        raise DataError("event time must be assigned before computing moments")
    units = panel.units()
    position = {unit: i for i, unit in enumerate(units)}
    mat = np.full((len(units), 2 * horizon), np.nan)
    for obs in panel:
        t = panel.event_time(obs)
        if t is None or t > horizon:
            continue
        row = position[obs.unit_id]
        if obs.register_income is not None:
            mat[row, t - 1] = math.log(obs.register_income)
            if obs.survey_income is not None:
                mat[row, horizon + t - 1] = (
                    math.log(obs.survey_income) - math.log(obs.register_income)
                )
    return mat


def moment_matrix(panel: Panel, horizon: int, mode: str = "pairwise") -> MomentMatrix:
    """Compute the moment matrix of {log Y*_t, u_t} over event times 1..T."""
    if mode not in ("pairwise", "balanced"):
        raise ConfigurationError(f"mode must be 'pairwise' or 'balanced', got {mode!r}")
    if horizon < 1:
        raise ConfigurationError(f"horizon must be >= 1, got {horizon}")
    names = moment_variable_names(horizon)
    mat = _event_matrix(panel, horizon)
    p = 2 * horizon

    if mode == "balanced":
        if mat.size == 0 or np.isnan(mat).any():
            raise DataError(
                "balanced mode requires a strongly balanced panel "
                "(every unit observed with valid incomes at every t)"
            )
        n = mat.shape[0]
        if n < 2:
            raise DataError(f"balanced moment matrix needs n >= 2, got n = {n}")
        cov = np.cov(mat, rowvar=False, ddof=1).reshape(p, p)
        sd = np.sqrt(np.diag(cov))
        with np.errstate(invalid="ignore", divide="ignore"):
            corr = cov / np.outer(sd, sd)
        np.fill_diagonal(corr, 1.0)
        return MomentMatrix(horizon, names, cov, corr, int(n), mode)

    cov = np.full((p, p), np.nan)
    corr = np.full((p, p), np.nan)
    n_eff = np.zeros((p, p), dtype=int)
    finite = np.isfinite(mat)
    for a in range(p):
        for b in range(a, p):
            mask = finite[:, a] & finite[:, b]
            n_ab = int(mask.sum())
            if n_ab < 2:
                raise DataError(
                    f"moment cell ({names[a]}, {names[b]}) has n = {n_ab} < 2"
                )
            xa = mat[mask, a]
            xb = mat[mask, b]
            da = xa - xa.mean()
            db = xb - xb.mean()
            cov_ab = float((da * db).sum() / (n_ab - 1))
            var_a = float((da * da).sum() / (n_ab - 1))
            var_b = float((db * db).sum() / (n_ab - 1))
            cov[a, b] = cov[b, a] = cov_ab
            n_eff[a, b] = n_eff[b, a] = n_ab
            if a == b:
                corr[a, a] = 1.0 if var_a > 0 else np.nan
            elif var_a > 0 and var_b > 0:
                corr[a, b] = corr[b, a] = cov_ab / math.sqrt(var_a * var_b)
    return MomentMatrix(horizon, names, cov, corr, n_eff, mode)


# -------------------------------------------------------------- reliability


@dataclass(frozen=True, slots=True)
class ReliabilityEstimate:
    value: float
    robust_se: float | None
    n: int


@dataclass(frozen=True)
class ReliabilityReport:
    """Classical and regression-based reliability ratios by event time.

    Level entries are keyed by t, first-difference entries by the later t of
    the difference (t >= 2). Classical entries come from moment-matrix cells;
    regression entries are OLS slopes of the true signal on the mismeasured
    report with HC1 standard errors.
    """

    classical_level: dict[int, ReliabilityEstimate]
    classical_fd: dict[int, ReliabilityEstimate]
    regression_level: dict[int, ReliabilityEstimate]
    regression_fd: dict[int, ReliabilityEstimate]


def reliability_classical(
    m: MomentMatrix, subtract_error_autocov: bool = False
) -> ReliabilityReport:
    """Classical reliability ratios from a moment matrix.

    Levels: lambda_t = var(Y*_t) / (var(Y*_t) + var(u_t)). First differences:
    numerator var(Y*_t) + var(Y*_{t-1}) - 2 cov(Y*_t, Y*_{t-1}); the
    denominator adds var(u_t) + var(u_{t-1}) and deliberately does NOT
    subtract the error autocovariance (the error is treated as classical,
    hence serially uncorrelated, inside this formula). Set
    ``subtract_error_autocov=True`` to add the -2 cov(u_t, u_{t-1}) term as a
    sensitivity check.
    """
    T = m.horizon

    def n_of(a: int, b: int) -> int:
        return int(m.n_eff if isinstance(m.n_eff, int) else m.n_eff[a, b])

    level: dict[int, ReliabilityEstimate] = {}
    for t in range(1, T + 1):
        vs = m.cov[t - 1, t - 1]
        vu = m.cov[T + t - 1, T + t - 1]
        den = vs + vu
        if not np.isfinite(den) or den <= 0:
            raise EstimationError(f"zero or invalid denominator for lambda level t={t}")
        level[t] = ReliabilityEstimate(float(vs / den), None, n_of(t - 1, t - 1))

    fd: dict[int, ReliabilityEstimate] = {}
    for t in range(2, T + 1):
        vs_t = m.cov[t - 1, t - 1]
        vs_p = m.cov[t - 2, t - 2]
        cs = m.cov[t - 1, t - 2]
        vu_t = m.cov[T + t - 1, T + t - 1]
        vu_p = m.cov[T + t - 2, T + t - 2]
        num = vs_t + vs_p - 2.0 * cs
        den = num + vu_t + vu_p
        if subtract_error_autocov:
            den -= 2.0 * m.cov[T + t - 1, T + t - 2]
        if not np.isfinite(den) or den == 0:
            raise EstimationError(f"zero or invalid denominator for lambda FD t={t}")
        fd[t] = ReliabilityEstimate(float(num / den), None, n_of(t - 1, t - 2))

    return ReliabilityReport(level, fd, {}, {})


def reliability_regression(
    panel: Panel, t: int, differenced: bool = False
) -> tuple[float, float, int]:
    """Regression-based reliability: slope of log Y* (or its first difference)
    on log Y (or its first difference), with intercept and HC1 standard error.

    The slope equals cov(Y, Y*) / var(Y) on the estimation sample by
    construction; under classical error it estimates lambda, otherwise the
    non-classical plim factor. Returns (slope, robust_se, n).
    """
    if panel.event_index is None:
        raise DataError("event time must be assigned before reliability regressions")
    signal: dict[str, float] = {}
    report: dict[str, float] = {}
    signal_prev: dict[str, float] = {}
    report_prev: dict[str, float] = {}
    for obs in panel:
        et = panel.event_time(obs)
        if et is None or not obs.has_both_incomes:
            continue
        if et == t:
            signal[obs.unit_id] = math.log(obs.register_income)
            report[obs.unit_id] = math.log(obs.survey_income)
        elif differenced and et == t - 1:
            signal_prev[obs.unit_id] = math.log(obs.register_income)
            report_prev[obs.unit_id] = math.log(obs.survey_income)
    if differenced:
        units = sorted(set(signal) & set(signal_prev))
        y = np.array([signal[u] - signal_prev[u] for u in units])
        x = np.array([report[u] - report_prev[u] for u in units])
    else:
        units = sorted(signal)
        y = np.array([signal[u] for u in units])
        x = np.array([report[u] for u in units])
    if len(units) < 3:
        raise DataError(
            f"reliability regression at t={t} (differenced={differenced}) "
            f"needs at least 3 observations, got {len(units)}"
        )
    if float(np.var(x)) == 0.0:
        raise EstimationError(f"mismeasured income has zero variance at t={t}")
    fit = ols_fit(y, {"mismeasured": x}, intercept=True)
    return fit.coefficients["mismeasured"], fit.robust_se["mismeasured"], fit.n_obs


def reliability_regression_from_moments(
    m: MomentMatrix, t: int, differenced: bool = False
) -> float:
    """The regression reliability slope implied by moment-matrix cells alone.

    Levels: (var Y*_t + cov(Y*_t, u_t)) / (var Y*_t + var u_t + 2 cov(Y*_t, u_t)),
    i.e. cov(Y, Y*)/var(Y) written in signal/error moments. The differenced
    variant applies the same identity to the differenced moments (here the
    error autocovariance terms do enter, because this is an identity rather
    than a classical-assumption formula).
    """
    T = m.horizon
    i_s, i_u = t - 1, T + t - 1
    if not differenced:
        vs = m.cov[i_s, i_s]
        vu = m.cov[i_u, i_u]
        c = m.cov[i_s, i_u]
        den = vs + vu + 2.0 * c
        if not np.isfinite(den) or den == 0:
            raise EstimationError(f"zero or invalid denominator at t={t}")
        return float((vs + c) / den)
    j_s, j_u = t - 2, T + t - 2
    v_ds = m.cov[i_s, i_s] + m.cov[j_s, j_s] - 2.0 * m.cov[i_s, j_s]
    v_du = m.cov[i_u, i_u] + m.cov[j_u, j_u] - 2.0 * m.cov[i_u, j_u]
    c_d = m.cov[i_s, i_u] + m.cov[j_s, j_u] - m.cov[i_s, j_u] - m.cov[j_s, i_u]
    den = v_ds + v_du + 2.0 * c_d
    if not np.isfinite(den) or den == 0:
        raise EstimationError(f"zero or invalid denominator at t={t} (differenced)")
    return float((v_ds + c_d) / den)


def reliability_report(
    panel: Panel,
    horizon: int,
    mode: str = "pairwise",
    subtract_error_autocov: bool = False,
) -> ReliabilityReport:
    """Full reliability report: classical ratios from the moment matrix plus
    regression-based ratios per event time."""
    m = moment_matrix(panel, horizon, mode)
    classical = reliability_classical(m, subtract_error_autocov)
    regression_level = {}
    regression_fd = {}
    for t in range(1, horizon + 1):
        slope, se, n = reliability_regression(panel, t, differenced=False)
        regression_level[t] = ReliabilityEstimate(slope, se, n)
    for t in range(2, horizon + 1):
        slope, se, n = reliability_regression(panel, t, differenced=True)
        regression_fd[t] = ReliabilityEstimate(slope, se, n)
    return ReliabilityReport(
        classical.classical_level, classical.classical_fd, regression_level, regression_fd
    )


# -------------------------------------------------------------- bias regime

SIGN_PRESERVED = "sign_preserved"
SIGN_REVERSED = "sign_reversed"
POSITIVE_BIAS = "positive_bias"
DEGENERATE = "degenerate"


@dataclass(frozen=True, slots=True)
class BiasRegime:
    """Plim factor of the OLS slope under correlated measurement error.

    ``factor`` multiplies the true slope in the probability limit,
    (var X* + cov(X*, u)) / (var X* + var u + 2 cov(X*, u)). ``regime``
    classifies the sign behaviour; ``degenerate`` flags a nonpositive
    denominator (perfect negative cancellation), in which case factor is NaN.
    """

    factor: float
    regime: str
    degenerate: bool = False


def bias_regime(
    sigma2_signal: float, sigma2_error: float, corr_signal_error: float
) -> BiasRegime:
    """Classify the OLS bias regime for given signal/error second moments.

    The slope's sign is preserved iff corr > -sqrt(var X*/var u); the bias is
    positive (factor > 1) iff corr < -sqrt(var u/var X*). With corr = 0 the
    factor reduces to the classical reliability ratio. Threshold cases where
    the factor is exactly zero are reported as sign_reversed.
    """
    if sigma2_signal <= 0 or sigma2_error <= 0:
        raise ConfigurationError(
            f"variances must be positive, got signal {sigma2_signal!r}, "
            f"error {sigma2_error!r}"
        )
    if abs(corr_signal_error) > 1:
        raise ConfigurationError(
            f"correlation must lie in [-1, 1], got {corr_signal_error!r}"
        )
    cov = corr_signal_error * math.sqrt(sigma2_signal * sigma2_error)
    denominator = sigma2_signal + sigma2_error + 2.0 * cov
    if denominator <= 1e-12 * (sigma2_signal + sigma2_error):
        return BiasRegime(float("nan"), DEGENERATE, True)
    factor = (sigma2_signal + cov) / denominator
    if corr_signal_error > -math.sqrt(sigma2_signal / sigma2_error):
        if corr_signal_error < -math.sqrt(sigma2_error / sigma2_signal):
            regime = POSITIVE_BIAS
        else:
            regime = SIGN_PRESERVED
    else:
        regime = SIGN_REVERSED
    return BiasRegime(float(factor), regime)
