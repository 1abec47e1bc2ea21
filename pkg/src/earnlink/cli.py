"""Batch command line: simulate -> harmonize -> balance -> estimate -> report.

Three subcommands, all driven by one TOML config file:

    earnlink simulate --config cfg.toml --out outdir
    earnlink analyze  --config cfg.toml --in panel.csv --out outdir
    earnlink harmonize --config cfg.toml --spells spells.csv --survey survey.csv --out outdir

Logging goes to standard error only; data lands in files. Exit codes:
0 success, 2 configuration error, 3 data error, 4 numerical error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import balancing, distribution, estimators, harmonize, report
from .dgp import DgpConfig, ErrorProcessParams, IncomeProcessParams, OutcomeSpec, oracle, simulate_panel
from .exceptions import ConfigurationError, DataError, EarnlinkError, EstimationError
from .panel_core import Panel, read_panel_csv, write_panel_csv

logger = logging.getLogger("earnlink")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

ANALYSIS_KINDS = (
    "error-summary",
    "quantile-profile",
    "moment-matrix",
    "reliability",
    "mincer",
    "histogram",
)


# ------------------------------------------------------------ config parsing


def _load_toml(path: Path) -> dict:
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid TOML: {exc}") from None


def _check_keys(table: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigurationError(f"unknown field(s) {unknown} in [{where}]")


def _require(table: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in table:
        raise ConfigurationError(f"missing required field {key!r} in [{where}]")
    return table[key]


def _dgp_from_config(config: dict) -> DgpConfig:
    if "dgp" not in config:
        raise ConfigurationError("config lacks a [dgp] section")
    table = config["dgp"]
    _check_keys(
        table,
        {
            "n_units",
            "n_periods",
            "income",
            "error",
            "outcome",
            "attrition_hazard",
            "gap_hazard",
            "top_code_limit",
            "seed",
            "first_period",
            "covariates",
        },
        "dgp",
    )
    income_table = _require(table, "income", "dgp")
    _check_keys(
        income_table,
        {"rho", "innovation_var", "mean_log_income", "unit_effect_var", "start_at_stationary"},
        "dgp.income",
    )
    income = IncomeProcessParams(
        rho=float(_require(income_table, "rho", "dgp.income")),
        innovation_var=float(_require(income_table, "innovation_var", "dgp.income")),
        mean_log_income=float(income_table.get("mean_log_income", 0.0)),
        unit_effect_var=float(income_table.get("unit_effect_var", 0.0)),
        start_at_stationary=bool(income_table.get("start_at_stationary", True)),
    )
    error_table = table.get("error", {})
    _check_keys(
        error_table,
        {"delta", "noise_var", "error_mean", "error_rho", "covariate_loadings"},
        "dgp.error",
    )
    loadings = {
        str(name): float(value)
        for name, value in error_table.get("covariate_loadings", {}).items()
    }
    error = ErrorProcessParams(
        delta=float(error_table.get("delta", 0.0)),
        noise_var=float(error_table.get("noise_var", 0.0)),
        error_mean=float(error_table.get("error_mean", 0.0)),
        error_rho=float(error_table.get("error_rho", 0.0)),
        covariate_loadings=loadings,
    )
    outcome = None
    if "outcome" in table:
        outcome_table = table["outcome"]
        _check_keys(outcome_table, {"beta", "alpha", "residual_var"}, "dgp.outcome")
        outcome = OutcomeSpec(
            beta=float(_require(outcome_table, "beta", "dgp.outcome")),
            alpha=float(outcome_table.get("alpha", 0.0)),
            residual_var=float(outcome_table.get("residual_var", 0.0)),
        )
    seed = table.get("seed", config.get("seed", 0))
    top_code = table.get("top_code_limit")
    return DgpConfig(
        n_units=int(_require(table, "n_units", "dgp")),
        n_periods=int(_require(table, "n_periods", "dgp")),
        income=income,
        error=error,
        outcome=outcome,
        attrition_hazard=float(table.get("attrition_hazard", 0.0)),
        gap_hazard=float(table.get("gap_hazard", 0.0)),
        top_code_limit=None if top_code is None else float(top_code),
        seed=int(seed),
        first_period=int(table.get("first_period", 2001)),
        covariate_names=tuple(str(c) for c in table.get("covariates", [])),
    )


def _restrictions_from_config(config: dict, base_dir: Path) -> harmonize.RestrictionConfig | None:
    if "restrictions" not in config:
        return None
    table = config["restrictions"]
    _check_keys(
        table,
        {
            "assessment_limits",
            "assessment_limits_csv",
            "assessment_cap_fraction",
            "marginal_limits",
            "marginal_limits_csv",
            "marginal_reliable_from",
            "error_cap",
            "age_range",
            "excluded_occupations",
            "drop_imputed",
        },
        "restrictions",
    )
    assessment: dict[tuple[int, str], float] = {}
    if "assessment_limits_csv" in table:
        assessment.update(
            harmonize.read_assessment_limits_csv(base_dir / str(table["assessment_limits_csv"]))
        )
    for row in table.get("assessment_limits", []):
        _check_keys(row, {"year", "region", "limit"}, "restrictions.assessment_limits")
        assessment[(int(row["year"]), str(row["region"]))] = float(row["limit"])
    marginal: dict[int, float] = {}
    if "marginal_limits_csv" in table:
        marginal.update(
            harmonize.read_marginal_limits_csv(base_dir / str(table["marginal_limits_csv"]))
        )
    for row in table.get("marginal_limits", []):
        _check_keys(row, {"year", "limit"}, "restrictions.marginal_limits")
        marginal[int(row["year"])] = float(row["limit"])
    age_range = table.get("age_range", [18, 65])
    if len(age_range) != 2:
        raise ConfigurationError("restrictions.age_range must be [low, high]")
    return harmonize.RestrictionConfig(
        assessment_limits=assessment,
        assessment_cap_fraction=float(table.get("assessment_cap_fraction", 0.98)),
        marginal_limits=marginal,
        marginal_reliable_from=int(table.get("marginal_reliable_from", 1999)),
        error_cap=float(table.get("error_cap", 1.5)),
        age_range=(float(age_range[0]), float(age_range[1])),
        excluded_occupations=frozenset(
            float(code) for code in table.get("excluded_occupations", [])
        ),
        drop_imputed=bool(table.get("drop_imputed", True)),
    )


def _balance_from_config(config: dict) -> balancing.BalanceSpec | None:
    if "balance" not in config:
        return None
    table = config["balance"]
    _check_keys(table, {"horizon", "mode"}, "balance")
    return balancing.BalanceSpec(
        horizon=int(_require(table, "horizon", "balance")),
        mode=str(table.get("mode", "weak")),
    )


def _workers_from_config(config: dict) -> tuple[int, int | None]:
    table = config.get("run", {})
    _check_keys(table, {"workers", "chunk_size"}, "run")
    workers = int(table.get("workers", 1))
    chunk_size = table.get("chunk_size")
    return workers, None if chunk_size is None else int(chunk_size)


# ----------------------------------------------------------------- analyses


def _ledger_json(ledger: harmonize.RestrictionLedger) -> list[dict]:
    return [
        {
            "step": entry.step_name,
            "units_remaining": entry.units_remaining,
            "observations_remaining": entry.observations_remaining,
        }
        for entry in ledger
    ]


def _summary_json(summary: distribution.ErrorSummary) -> dict:
    return {
        "mean": summary.mean,
        "sd": summary.sd,
        "p5": summary.p5,
        "p25": summary.p25,
        "p50": summary.p50,
        "p75": summary.p75,
        "p95": summary.p95,
        "share_negative": summary.share_negative,
        "geometric_ratio": summary.geometric_ratio,
        "n": summary.n,
    }


def _estimate_json(estimate: estimators.ReliabilityEstimate) -> dict:
    return {"value": estimate.value, "robust_se": estimate.robust_se, "n": estimate.n}


def _regression_json(result: estimators.RegressionResult, f_names: list[str] | None) -> dict:
    out: dict[str, Any] = {
        "coefficients": {name: result.coefficients[name] for name in result.column_names},
        "robust_se": {name: result.robust_se[name] for name in result.column_names},
        "r_squared": result.r_squared,
        "n_obs": result.n_obs,
    }
    if f_names:
        f_stat, df1, df2, p_value = estimators.joint_f_test(result, names=f_names)
        out["joint_f"] = {"f": f_stat, "df1": df1, "df2": df2, "p": p_value}
    return out


def _mincer_fit(
    panel: Panel,
    dependent: str,
    covariates: list[str],
    year_fe: bool,
    weighted: bool,
    mask: np.ndarray,
) -> estimators.RegressionResult:
    y = panel.column(dependent)
    y = np.where(mask, y, np.nan)
    x = {name: panel.column(name) for name in covariates}
    return estimators.ols_fit(
        y,
        x,
        intercept=True,
        year_fe=year_fe,
        periods=panel.column("period") if year_fe else None,
        weights=panel.column("weight") if weighted else None,
    )


def _run_one_analysis(
    panel: Panel, spec: Mapping[str, Any], index: int, out_dir: Path
) -> dict:
    kind = str(_require(spec, "kind", "analyses"))
    if kind not in ANALYSIS_KINDS:
        raise ConfigurationError(
            f"unknown analysis kind {kind!r}; expected one of {ANALYSIS_KINDS}"
        )
    entry: dict[str, Any] = {"kind": kind, "label": str(spec.get("label", f"{kind}_{index}"))}

    if kind == "error-summary":
        _check_keys(spec, {"kind", "label", "notion", "weighted"}, "analyses.error-summary")
        summary = distribution.summarize_errors(
            panel,
            notion=str(spec.get("notion", "log")),
            weighted=bool(spec.get("weighted", False)),
        )
        entry["notion"] = str(spec.get("notion", "log"))
        entry["summary"] = _summary_json(summary)

    elif kind == "quantile-profile":
        _check_keys(spec, {"kind", "label", "n_quantiles", "notion"}, "analyses.quantile-profile")
        profile = distribution.quantile_profile(
            panel,
            n_quantiles=int(_require(spec, "n_quantiles", "analyses.quantile-profile")),
            notion=str(spec.get("notion", "log")),
        )
        entry["notion"] = profile.notion
        entry["n_quantiles"] = profile.n_quantiles
        entry["quantiles"] = {
            str(q): _summary_json(profile.summaries[q]) for q in sorted(profile.summaries)
        }
        path = out_dir / f"analysis_{index:02d}_quantile_profile.csv"
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                ["quantile", "n", "mean", "sd", "p5", "p25", "p50", "p75", "p95",
                 "share_negative", "geometric_ratio"]
            )
            for q in sorted(profile.summaries):
                s = profile.summaries[q]
                writer.writerow(
                    [q, s.n]
                    + [report.format_float(v) for v in (
                        s.mean, s.sd, s.p5, s.p25, s.p50, s.p75, s.p95,
                        s.share_negative, s.geometric_ratio)]
                )
        entry["csv"] = path.name

    elif kind == "moment-matrix":
        _check_keys(spec, {"kind", "label", "mode", "horizon"}, "analyses.moment-matrix")
        matrix = estimators.moment_matrix(
            panel,
            horizon=int(_require(spec, "horizon", "analyses.moment-matrix")),
            mode=str(spec.get("mode", "pairwise")),
        )
        entry["mode"] = matrix.mode
        entry["horizon"] = matrix.horizon
        entry["variables"] = list(matrix.variables)
        entry["cov"] = matrix.cov
        entry["corr"] = matrix.corr
        entry["n_eff"] = matrix.n_eff

    elif kind == "reliability":
        _check_keys(
            spec,
            {"kind", "label", "flavor", "horizon", "mode", "subtract_error_autocov"},
            "analyses.reliability",
        )
        flavor = str(spec.get("flavor", "both"))
        if flavor not in ("classical", "regression", "both"):
            raise ConfigurationError(f"reliability flavor must be classical/regression/both, got {flavor!r}")
        horizon = int(_require(spec, "horizon", "analyses.reliability"))
        mode = str(spec.get("mode", "pairwise"))
        subtract = bool(spec.get("subtract_error_autocov", False))
        entry["flavor"] = flavor
        entry["horizon"] = horizon
        if flavor in ("classical", "both"):
            matrix = estimators.moment_matrix(panel, horizon, mode)
            classical = estimators.reliability_classical(matrix, subtract)
            entry["classical_level"] = {
                str(t): _estimate_json(e) for t, e in sorted(classical.classical_level.items())
            }
            entry["classical_fd"] = {
                str(t): _estimate_json(e) for t, e in sorted(classical.classical_fd.items())
            }
        if flavor in ("regression", "both"):
            level = {}
            fd = {}
            for t in range(1, horizon + 1):
                slope, se, n = estimators.reliability_regression(panel, t, differenced=False)
                level[str(t)] = {"value": slope, "robust_se": se, "n": n}
            for t in range(2, horizon + 1):
                slope, se, n = estimators.reliability_regression(panel, t, differenced=True)
                fd[str(t)] = {"value": slope, "robust_se": se, "n": n}
            entry["regression_level"] = level
            entry["regression_fd"] = fd

    elif kind == "mincer":
        _check_keys(
            spec,
            {"kind", "label", "dependent", "covariates", "year_fe", "by_gender", "weighted"},
            "analyses.mincer",
        )
        dependent = str(_require(spec, "dependent", "analyses.mincer"))
        if dependent not in ("u", "survey", "register"):
            raise ConfigurationError(
                f"mincer dependent must be u/survey/register, got {dependent!r}"
            )
        covariates = [str(c) for c in spec.get("covariates", [])]
        if not covariates:
            raise ConfigurationError("mincer analysis needs a nonempty covariates list")
        year_fe = bool(spec.get("year_fe", False))
        weighted = bool(spec.get("weighted", False))
        both = np.isfinite(panel.column("survey_income")) & np.isfinite(
            panel.column("register_income")
        )
        entry["dependent"] = dependent
        entry["covariates"] = covariates
        entry["year_fe"] = year_fe
        fit = _mincer_fit(panel, dependent, covariates, year_fe, weighted, both)
        entry["pooled"] = _regression_json(fit, covariates)
        if bool(spec.get("by_gender", False)):
            female = panel.column("female")
            if not np.isfinite(female).any():
                raise DataError("by_gender requires a 'female' covariate")
            for value, label in ((0.0, "men"), (1.0, "women")):
                sub_mask = both & (female == value)
                sub = _mincer_fit(panel, dependent, covariates, year_fe, weighted, sub_mask)
                entry[label] = _regression_json(sub, covariates)

    elif kind == "histogram":
        _check_keys(
            spec,
            {"kind", "label", "variable", "width", "lo", "hi", "weighted", "normal_overlay"},
            "analyses.histogram",
        )
        variable = str(_require(spec, "variable", "analyses.histogram"))
        values = panel.column(variable)
        weights = panel.column("weight") if bool(spec.get("weighted", False)) else None
        keep = np.isfinite(values)
        series = distribution.histogram(
            values[keep],
            width=float(_require(spec, "width", "analyses.histogram")),
            value_range=(
                float(_require(spec, "lo", "analyses.histogram")),
                float(_require(spec, "hi", "analyses.histogram")),
            ),
            weights=None if weights is None else weights[keep],
            normal_overlay=bool(spec.get("normal_overlay", False)),
        )
        entry["variable"] = variable
        entry["bin_edges"] = series.bin_edges
        entry["counts"] = series.counts
        entry["underflow"] = series.underflow
        entry["overflow"] = series.overflow
        entry["n_missing"] = int((~keep).sum())
        if series.normal_mean is not None:
            entry["normal_overlay"] = {"mean": series.normal_mean, "sd": series.normal_sd}
        path = out_dir / f"analysis_{index:02d}_histogram.csv"
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["bin_left", "bin_right", "count"])
            for i in range(series.counts.size):
                writer.writerow(
                    [
                        report.format_float(series.bin_edges[i]),
                        report.format_float(series.bin_edges[i + 1]),
                        report.format_float(series.counts[i])
                        if series.weighted
                        else int(series.counts[i]),
                    ]
                )
        entry["csv"] = path.name

    return entry


# ----------------------------------------------------------------- commands


def cmd_simulate(config_path: Path, out_dir: Path) -> int:
    config = _load_toml(config_path)
    cfg = _dgp_from_config(config)
    workers, chunk_size = _workers_from_config(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info(
        "simulating %d units x %d periods (seed %d, %d worker(s))",
        cfg.n_units, cfg.n_periods, cfg.seed, workers,
    )
    panel = simulate_panel(cfg, workers=workers, chunk_size=chunk_size)
    panel_path = out_dir / "panel.csv"
    write_panel_csv(panel, panel_path)
    logger.info("wrote %s (%d observations)", panel_path, len(panel))
    oracle_path = out_dir / "oracle.json"
    try:
        values = oracle(cfg)
        oracle_doc: dict[str, Any] = {
            "schema_version": report.SCHEMA_VERSION,
            "available": True,
            "lambda_level": values.lambda_level,
            "lambda_fd": values.lambda_fd,
            "nonclassical_slope_factor": values.nonclassical_slope_factor,
            "dep_var_bias_factor": values.dep_var_bias_factor,
            "sign_regime": values.sign_regime,
            "sigma2_signal": values.sigma2_signal,
            "sigma2_error": values.sigma2_error,
            "cov_signal_error": values.cov_signal_error,
            "corr_signal_error": values.corr_signal_error,
        }
    except ConfigurationError as exc:
        oracle_doc = {
            "schema_version": report.SCHEMA_VERSION,
            "available": False,
            "reason": str(exc),
        }
    report.write_json(oracle_path, oracle_doc)
    logger.info("wrote %s", oracle_path)
    return EXIT_OK


def cmd_analyze(config_path: Path, in_path: Path, out_dir: Path) -> int:
    config = _load_toml(config_path)
    restrictions = _restrictions_from_config(config, config_path.parent)
    balance_spec = _balance_from_config(config)
    analyses = config.get("analyses", [])
    if not isinstance(analyses, list):
        raise ConfigurationError("[analyses] must be an array of tables")
    out_dir.mkdir(parents=True, exist_ok=True)

    try:
        panel = read_panel_csv(in_path)
    except OSError as exc:
        raise DataError(f"cannot read panel {in_path}: {exc}") from None
    logger.info("read %s: %d observations, %d units", in_path, len(panel), panel.n_units())

    doc: dict[str, Any] = {
        "schema_version": report.SCHEMA_VERSION,
        "input": in_path.name,
        "n_observations_input": len(panel),
        "n_units_input": panel.n_units(),
    }

    if restrictions is not None:
        panel, ledger = harmonize.apply_restrictions(panel, restrictions)
        doc["restriction_ledger"] = _ledger_json(ledger)
        logger.info("restrictions left %d observations", len(panel))
    else:
        doc["restriction_ledger"] = None

    panel = balancing.assign_event_time(panel)
    if balance_spec is not None:
        panel = balancing.build_balanced(panel, balance_spec)
        doc["balance"] = {"horizon": balance_spec.horizon, "mode": balance_spec.mode}
    else:
        doc["balance"] = {"horizon": None, "mode": "weak"}
    doc["n_observations_analyzed"] = len(panel)
    doc["n_units_analyzed"] = panel.n_units()

    entries = []
    for index, spec in enumerate(analyses):
        if "kind" not in spec:
            raise ConfigurationError(f"analysis #{index} lacks the 'kind' field")
        logger.info("running analysis %d: %s", index, spec["kind"])
        entries.append(_run_one_analysis(panel, spec, index, out_dir))
    doc["analyses"] = entries

    report_path = out_dir / "report.json"
    report.write_json(report_path, doc)
    logger.info("wrote %s", report_path)
    return EXIT_OK


def cmd_harmonize(config_path: Path, spells_path: Path, survey_path: Path, out_dir: Path) -> int:
    config = _load_toml(config_path)
    restrictions = _restrictions_from_config(config, config_path.parent)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        spells = harmonize.read_spells_csv(spells_path)
        surveys = harmonize.read_survey_csv(survey_path)
    except OSError as exc:
        raise DataError(f"cannot read input: {exc}") from None
    logger.info("read %d spells, %d survey rows", len(spells), len(surveys))
    panel = harmonize.link_surveys_to_register(surveys, spells)
    if restrictions is not None:
        panel, ledger = harmonize.apply_restrictions(panel, restrictions)
        report.write_json(
            out_dir / "ledger.json",
            {"schema_version": report.SCHEMA_VERSION, "ledger": _ledger_json(ledger)},
        )
        logger.info("restrictions left %d observations", len(panel))
    panel_path = out_dir / "panel.csv"
    write_panel_csv(panel, panel_path)
    logger.info("wrote %s (%d observations)", panel_path, len(panel))
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="earnlink",
        description="Linked survey-register earnings panels: simulation, "
        "harmonization, and measurement-error analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a linked panel and its oracle")
    p_sim.add_argument("--config", required=True, type=Path)
    p_sim.add_argument("--out", required=True, type=Path)

    p_ana = sub.add_parser("analyze", help="run the restriction/balancing/analysis pipeline")
    p_ana.add_argument("--config", required=True, type=Path)
    p_ana.add_argument("--in", dest="in_path", required=True, type=Path)
    p_ana.add_argument("--out", required=True, type=Path)

    p_har = sub.add_parser("harmonize", help="link spells with survey rows into a panel")
    p_har.add_argument("--config", required=True, type=Path)
    p_har.add_argument("--spells", required=True, type=Path)
    p_har.add_argument("--survey", required=True, type=Path)
    p_har.add_argument("--out", required=True, type=Path)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out)
        if args.command == "analyze":
            return cmd_analyze(args.config, args.in_path, args.out)
        return cmd_harmonize(args.config, args.spells, args.survey, args.out)
    except ConfigurationError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA
    except EstimationError as exc:
        logger.error("numerical error: %s", exc)
        return EXIT_NUMERICAL
    except EarnlinkError as exc:  # future subclasses
        logger.error("error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
