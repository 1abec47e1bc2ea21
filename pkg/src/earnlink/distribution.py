"""Descriptive machinery: error-distribution summaries, earnings-quantile
profiles, histogram series, and weighted group summaries.

Quantiles follow the lower empirical convention throughout: the p-quantile
of n sorted values is the order statistic at position ceil(p * n). The
weighted generalization takes the first sorted value whose cumulative weight
reaches p times the total weight. Weighted standard deviations use the
frequency-weights formula with denominator (sum w) - 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .exceptions import ConfigurationError, DataError
from .panel_core import LinkedObservation, Panel, compute_error_triple

ERROR_NOTIONS = ("log", "nominal", "relative")

QUANTILE_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)

# Absolute slack absorbing float noise in p * n when it is mathematically an
# integer (e.g. 0.05 * 20); legitimate fractional parts are far larger.
_RANK_SLACK = 1e-9


@dataclass(frozen=True, slots=True)
class ErrorSummary:
    """Location, scale, and shape of one error notion's distribution.

    geometric_ratio is exp(mean of the log error) on the same sample, i.e.
    the geometric mean of survey/register income ratios, whatever notion the
    other fields describe.
    """

    mean: float
    sd: float
    p5: float
    p25: float
    p50: float
    p75: float
    p95: float
    share_negative: float
    geometric_ratio: float
    n: int


@dataclass(frozen=True)
class QuantileProfile:
    """Per earnings-quantile error summaries (quantile 1 = lowest earnings).

    Quantile groups are assigned by register income within each calendar
    year, then pooled across years; ``summaries`` maps q in 1..Q to the
    pooled ErrorSummary of the chosen notion.
    """

    n_quantiles: int
    notion: str
    summaries: dict[int, ErrorSummary]


@dataclass(frozen=True)
class HistogramSeries:
    """Uniform-width, left-closed right-open bins plus an under/overflow pair.

    counts sums to the number (or weight) of in-range values; values below
    the range land in ``underflow``, values at or above its upper edge in
    ``overflow``. The optional normal overlay carries the sample mean and
    standard deviation of the in-range values.
    """

    bin_edges: np.ndarray
    counts: np.ndarray
    underflow: float
    overflow: float
    weighted: bool
    normal_mean: float | None = None
    normal_sd: float | None = None


def _weighted_mean_sd(values: np.ndarray, weights: np.ndarray) -> tuple[float, float]:
    total = float(weights.sum())
    if total <= 0:
        raise DataError("total weight must be positive")
    mean = float((weights * values).sum() / total)
    if total <= 1:
        return mean, float("nan")
    variance = float((weights * (values - mean) ** 2).sum() / (total - 1.0))
    return mean, math.sqrt(max(variance, 0.0))


def _lower_quantile(sorted_values: np.ndarray, sorted_weights: np.ndarray, p: float) -> float:
    cumulative = np.cumsum(sorted_weights)
    target = p * cumulative[-1]
    index = int(np.searchsorted(cumulative, target - _RANK_SLACK * max(cumulative[-1], 1.0)))
    return float(sorted_values[min(index, sorted_values.size - 1)])


def _summary(values: np.ndarray, log_values: np.ndarray, weights: np.ndarray) -> ErrorSummary:
    order = np.argsort(values, kind="stable")
    sorted_values = values[order]
    sorted_weights = weights[order]
    mean, sd = _weighted_mean_sd(values, weights)
    total = float(weights.sum())
    quantiles = [_lower_quantile(sorted_values, sorted_weights, p) for p in QUANTILE_LEVELS]
    share_negative = float(weights[values < 0].sum() / total)
    log_mean = float((weights * log_values).sum() / total)
    return ErrorSummary(
        mean=mean,
        sd=sd,
        p5=quantiles[0],
        p25=quantiles[1],
        p50=quantiles[2],
        p75=quantiles[3],
        p95=quantiles[4],
        share_negative=share_negative,
        geometric_ratio=math.exp(log_mean),
        n=int(values.size),
    )


def _error_values(obs: LinkedObservation, notion: str) -> tuple[float, float]:
    triple = compute_error_triple(obs)
    if notion == "log":
        return triple.log_error, triple.log_error
    if notion == "nominal":
        return triple.nominal_error, triple.log_error
    return triple.relative_error, triple.log_error


def summarize_errors(panel: Panel, notion: str = "log", weighted: bool = False) -> ErrorSummary:
    """Summarize the chosen error notion over observations with both incomes."""
    if notion not in ERROR_NOTIONS:
        raise ConfigurationError(f"notion must be one of {ERROR_NOTIONS}, got {notion!r}")
    values = []
    log_values = []
    weights = []
    for obs in panel:
        if not obs.has_both_incomes:
            continue
        value, log_value = _error_values(obs, notion)
        values.append(value)
        log_values.append(log_value)
        weights.append(obs.weight if weighted else 1.0)
    if not values:
        raise DataError("no observations with both incomes to summarize")
    return _summary(np.array(values), np.array(log_values), np.array(weights))


def quantile_profile(panel: Panel, n_quantiles: int, notion: str = "log") -> QuantileProfile:
    """Assign observations to register-earnings quantiles within each year and
    pool the per-quantile error distributions across years.

    Within a year, observations are ranked by register income with ties
    broken by unit_id; group sizes differ by at most one. Every year must
    contribute at least n_quantiles linked observations.
    """
    if n_quantiles < 2:
        raise ConfigurationError(f"n_quantiles must be >= 2, got {n_quantiles!r}")
    if notion not in ERROR_NOTIONS:
        raise ConfigurationError(f"notion must be one of {ERROR_NOTIONS}, got {notion!r}")
    by_year: dict[int, list[LinkedObservation]] = {}
    for obs in panel:
        if obs.has_both_incomes:
            by_year.setdefault(obs.period, []).append(obs)
    if not by_year:
        raise DataError("no observations with both incomes")
    pooled: dict[int, tuple[list[float], list[float]]] = {
        q: ([], []) for q in range(1, n_quantiles + 1)
    }
    for year in sorted(by_year):
        group = by_year[year]
        if len(group) < n_quantiles:
            raise DataError(
                f"year {year} has {len(group)} linked observations, "
                f"fewer than the {n_quantiles} quantile groups requested"
            )
        group.sort(key=lambda o: (o.register_income, o.unit_id))
        n = len(group)
        for rank, obs in enumerate(group):
            q = rank * n_quantiles // n + 1
            value, log_value = _error_values(obs, notion)
            pooled[q][0].append(value)
            pooled[q][1].append(log_value)
    summaries = {
        q: _summary(np.array(vals), np.array(logs), np.ones(len(vals)))
        for q, (vals, logs) in pooled.items()
    }
    return QuantileProfile(n_quantiles, notion, summaries)


def histogram(
    values,
    width: float,
    value_range: tuple[float, float],
    weights=None,
    normal_overlay: bool = False,
) -> HistogramSeries:
    """Bin values into uniform left-closed right-open bins over value_range.

    The range must span a whole number of bins. Out-of-range values are
    tallied in the underflow/overflow pair, never silently dropped. With
    weights, counts are weight totals; the overlay parameters are the
    (weighted) mean and standard deviation of the in-range values.
    """
    values = np.asarray(values, dtype=float)
    if values.size and not np.isfinite(values).all():
        raise DataError("histogram values must be finite")
    if width <= 0:
        raise ConfigurationError(f"bin width must be > 0, got {width!r}")
    lo, hi = float(value_range[0]), float(value_range[1])
    if not lo < hi:
        raise ConfigurationError(f"empty range {value_range!r}")
    n_bins_real = (hi - lo) / width
    n_bins = int(round(n_bins_real))
    if n_bins < 1 or abs(n_bins_real - n_bins) > 1e-9 * max(n_bins_real, 1.0):
        raise ConfigurationError(
            f"range {value_range!r} is not a whole number of bins of width {width!r}"
        )
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != values.shape:
            raise DataError("weights do not match values")
        if not np.isfinite(weights).all() or (weights < 0).any():
            raise DataError("weights must be finite and nonnegative")
    edges = lo + width * np.arange(n_bins + 1)

    position = np.floor((values - lo) / width).astype(np.int64) if values.size else np.array([], dtype=np.int64)
    under = values < lo
    over = ~under & (position >= n_bins)
    included = ~under & ~over

    w = weights if weights is not None else np.ones(values.size)
    counts = np.bincount(position[included], weights=w[included], minlength=n_bins)[:n_bins]
    if weights is None:
        counts = counts.astype(np.int64)
    underflow = float(w[under].sum())
    overflow = float(w[over].sum())

    normal_mean = normal_sd = None
    if normal_overlay and included.any():
        normal_mean, normal_sd = _weighted_mean_sd(values[included], w[included])

    return HistogramSeries(
        bin_edges=edges,
        counts=counts,
        underflow=underflow,
        overflow=overflow,
        weighted=weights is not None,
        normal_mean=normal_mean,
        normal_sd=normal_sd,
    )


# ------------------------------------------------------- group summaries


@dataclass(frozen=True, slots=True)
class GroupSummary:
    """Per-group statistics: variable -> (mean, sd, n of valid values)."""

    name: str
    n_obs: int
    stats: Mapping[str, tuple[float, float, int]]


def weighted_group_summary(
    panel: Panel,
    predicate_chain: Sequence[tuple[str, Callable[[LinkedObservation], bool]]],
    variables: Sequence[str],
    weighted: bool = False,
) -> list[GroupSummary]:
    """Summarize variables along a funnel of cumulative predicates.

    Group k contains the observations satisfying every predicate up to and
    including the k-th (emulating Asked / Consented / Matched style funnel
    columns). Because sampling weights are only meaningful within one survey
    module, a weighted request on a panel mixing module_tag values is
    refused; request one module at a time instead.
    """
    if weighted:
        tags = {obs.module_tag for obs in panel}
        if len(tags) > 1:
            raise ConfigurationError(
                "weighted summaries cannot pool across module_tag values "
                f"{sorted(tags)}; weights are module-specific, filter to one "
                "module first"
            )
    observations = list(panel)
    results = []
    for name, predicate in predicate_chain:
        observations = [obs for obs in observations if predicate(obs)]
        stats: dict[str, tuple[float, float, int]] = {}
        for variable in variables:
            rows = []
            for obs in observations:
                value = _resolve(obs, variable)
                if value is not None and math.isfinite(value):
                    rows.append((value, obs.weight if weighted else 1.0))
            if not rows:
                stats[variable] = (float("nan"), float("nan"), 0)
                continue
            vals = np.array([r[0] for r in rows])
            wts = np.array([r[1] for r in rows])
            mean, sd = _weighted_mean_sd(vals, wts)
            stats[variable] = (mean, sd, len(rows))
        results.append(GroupSummary(name, len(observations), stats))
    return results


def _resolve(obs: LinkedObservation, variable: str) -> float | None:
    if variable == "survey_income":
        return obs.survey_income
    if variable == "register_income":
        return obs.register_income
    if variable == "weight":
        return obs.weight
    if variable in ("log_error", "u", "nominal_error", "relative_error"):
        if not obs.has_both_incomes:
            return None
        triple = compute_error_triple(obs)
        return getattr(triple, "log_error" if variable == "u" else variable)
    return obs.covariates.get(variable)
