"""Turn spell-level register data plus survey responses into linked monthly
observations, and apply the sample-restriction pipeline with an audit ledger.

The register side reports average gross daily pay per employment spell; the
survey side reports monthly income for an interview month. Linking picks the
main job covering the month before the interview, converts daily to monthly
pay with the average-days-per-month factor, and merges employer attributes
into the observation's covariates.
"""
from __future__ import annotations

import calendar
import csv
import datetime
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .exceptions import ConfigurationError, DataError
from .panel_core import LinkedObservation, Panel, panel_from_records

SPELL_KINDS = ("employment", "unemployment_benefit", "one_time_payment")

# Average number of days per month: 7 months of 31 days, 4 of 30, and one of
# 28.75 (February across leap years), i.e. 365.75 / 12. The exact fraction is
# used everywhere; 30.48 is only its display rounding.
DAYS_PER_MONTH = 7.0 / 12.0 * 31.0 + 4.0 / 12.0 * 30.0 + 1.0 / 12.0 * 28.75


@dataclass(frozen=True, slots=True)
class RegisterSpell:
    """One register employment (or benefit/payment) spell."""

    unit_id: str
    spell_id: str
    start: datetime.date
    end: datetime.date
    daily_income: float
    spell_kind: str
    employer_attrs: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise DataError(
                f"spell {self.spell_id!r} of unit {self.unit_id!r}: start {self.start} "
                f"is after end {self.end}"
            )
        if self.daily_income < 0:
            raise DataError(
                f"spell {self.spell_id!r} of unit {self.unit_id!r}: "
                f"daily_income must be >= 0, got {self.daily_income!r}"
            )
        if self.spell_kind not in SPELL_KINDS:
            raise DataError(
                f"spell {self.spell_id!r} of unit {self.unit_id!r}: "
                f"spell_kind must be one of {SPELL_KINDS}, got {self.spell_kind!r}"
            )


def daily_to_monthly(daily_income: float) -> float:
    """Convert average daily pay to monthly pay (factor 365.75/12 = 30.4791...)."""
    if daily_income < 0:
        raise DataError(f"daily_income must be >= 0, got {daily_income!r}")
    return daily_income * DAYS_PER_MONTH


def _previous_month(year: int, month: int) -> tuple[int, int]:
    if month == 1:
        return year - 1, 12
    return year, month - 1


def select_main_spell(
    spells: Iterable[RegisterSpell], reference_month: tuple[int, int]
) -> RegisterSpell | None:
    """Pick the main employment spell for an interview month.

    ``reference_month`` is the interview (year, month); the spell must cover
    the entire previous calendar month. Benefit and one-time-payment spells
    never qualify. Among qualifying spells the one with the highest daily pay
    wins; exact ties go to the lexicographically smallest spell_id. Returns
    None when nothing qualifies (absence is a value, not an error).
    """
    year, month = reference_month
    t_year, t_month = _previous_month(int(year), int(month))
    first = datetime.date(t_year, t_month, 1)
    last = datetime.date(t_year, t_month, calendar.monthrange(t_year, t_month)[1])
    best: RegisterSpell | None = None
    for spell in spells:
        if spell.spell_kind != "employment":
            continue
        if spell.start > first or spell.end < last:
            continue
        if (
            best is None
            or spell.daily_income > best.daily_income
            or (spell.daily_income == best.daily_income and spell.spell_id < best.spell_id)
        ):
            best = spell
    return best


# ---------------------------------------------------------------- linking


@dataclass(frozen=True, slots=True)
class SurveyResponse:
    """One survey person-year: reported monthly income plus covariates."""

    unit_id: str
    period: int
    interview_month: int
    survey_income: float | None
    weight: float = 1.0
    module_tag: str = "core"
    covariates: Mapping[str, float] = field(default_factory=dict)


def link_surveys_to_register(
    surveys: Sequence[SurveyResponse], spells: Sequence[RegisterSpell]
) -> Panel:
    """Merge survey responses with register spells into a Panel.

    For every survey row the main spell for (period, interview_month) is
    selected; its daily pay is converted to a monthly register income.
    ``employed`` records whether a main spell was found. Employer attributes
    are merged into the covariates, with survey covariates taking precedence
    on name collisions.
    """
    by_unit: dict[str, list[RegisterSpell]] = {}
    for spell in spells:
        by_unit.setdefault(spell.unit_id, []).append(spell)
    records = []
    for response in surveys:
        main = select_main_spell(
            by_unit.get(response.unit_id, ()), (response.period, response.interview_month)
        )
        covariates = dict(main.employer_attrs) if main is not None else {}
        covariates.update(response.covariates)
        register_income = None
        if main is not None:
            monthly = daily_to_monthly(main.daily_income)
            register_income = monthly if monthly > 0 else None
        records.append(
            LinkedObservation(
                unit_id=response.unit_id,
                period=response.period,
                survey_income=response.survey_income,
                register_income=register_income,
                employed=main is not None,
                weight=response.weight,
                covariates=covariates,
                module_tag=response.module_tag,
            )
        )
    return panel_from_records(records)


# ------------------------------------------------------------ restrictions


@dataclass(frozen=True)
class RestrictionConfig:
    """Parameters of the seven-step sample restriction pipeline.

    assessment_limits maps (year, region) to the statutory monthly earnings
    cap; observations are kept strictly below assessment_cap_fraction times
    the cap. Region is read from the ``east`` covariate (nonzero = "east",
    zero = "west"). marginal_limits maps year to the marginal-employment
    threshold, checked only for years before marginal_reliable_from (the
    first year such employment is reliably recorded).
    """

    assessment_limits: Mapping[tuple[int, str], float] = field(default_factory=dict)
    assessment_cap_fraction: float = 0.98
    marginal_limits: Mapping[int, float] = field(default_factory=dict)
    marginal_reliable_from: int = 1999
    error_cap: float = 1.5
    age_range: tuple[float, float] = (18.0, 65.0)
    excluded_occupations: frozenset[float] = frozenset()
    drop_imputed: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.assessment_cap_fraction <= 1.0:
            raise ConfigurationError(
                f"assessment_cap_fraction must be in (0, 1], got {self.assessment_cap_fraction!r}"
            )
        if self.error_cap <= 0:
            raise ConfigurationError(f"error_cap must be > 0, got {self.error_cap!r}")
        if self.age_range[0] > self.age_range[1]:
            raise ConfigurationError(f"age_range is empty: {self.age_range!r}")
        object.__setattr__(
            self, "excluded_occupations", frozenset(float(c) for c in self.excluded_occupations)
        )


@dataclass(frozen=True, slots=True)
class LedgerEntry:
    step_name: str
    units_remaining: int
    observations_remaining: int


@dataclass(frozen=True)
class RestrictionLedger:
    """Counts of surviving units and observations after each restriction step."""

    entries: tuple[LedgerEntry, ...]

    def __post_init__(self) -> None:
        units = [e.units_remaining for e in self.entries]
        if any(b > a for a, b in zip(units, units[1:])):
            raise DataError("ledger units_remaining must be weakly decreasing")

    def __iter__(self):
        return iter(self.entries)


def _region(obs: LinkedObservation) -> str | None:
    east = obs.covariates.get("east")
    if east is None:
        return None
    return "east" if east >= 0.5 else "west"


def apply_restrictions(panel: Panel, cfg: RestrictionConfig) -> tuple[Panel, RestrictionLedger]:
    """Apply the seven restriction steps in order, recording counts after each.

    Steps: (1) register income strictly below the capped assessment limit for
    the observation's (year, region); (2) occupations with untypical pay
    structures excluded; (3) absolute nominal error within error_cap relative
    to either income (drop when |Y-Y*|/Y* or |Y-Y*|/Y exceeds the cap);
    (4) year of birth coincides across sources (covariates birth_year_survey
    and birth_year_register); (5) age covariate within age_range; (6) register
    income strictly above the marginal-employment threshold in years before
    marginal_reliable_from; (7) income not flagged as imputed (covariate
    ``imputed``).

    An observation lacking the data a step needs is dropped at that step and
    counted in the ledger. A missing assessment (or marginal) limit for a
    (year, region) actually present in the data is a configuration error.
    The pipeline is idempotent: survivors pass every step again.
    """

    def below_assessment_limit(obs: LinkedObservation) -> bool:
        if obs.register_income is None:
            return False
        region = _region(obs)
        if region is None:
            return False
        limit = cfg.assessment_limits.get((obs.period, region))
        if limit is None:
            raise ConfigurationError(
                f"no assessment limit configured for (year={obs.period}, region={region!r})"
            )
        return obs.register_income < cfg.assessment_cap_fraction * limit

    def typical_pay_structure(obs: LinkedObservation) -> bool:
        if not cfg.excluded_occupations:
            return True
        occupation = obs.covariates.get("occupation")
        if occupation is None:
            return False
        return float(occupation) not in cfg.excluded_occupations

    def error_within_cap(obs: LinkedObservation) -> bool:
        if not obs.has_both_incomes:
            return False
        gap = abs(obs.survey_income - obs.register_income)
        return (
            gap / obs.register_income <= cfg.error_cap
            and gap / obs.survey_income <= cfg.error_cap
        )

    def consistent_birth_year(obs: LinkedObservation) -> bool:
        survey_yob = obs.covariates.get("birth_year_survey")
        register_yob = obs.covariates.get("birth_year_register")
        if survey_yob is None or register_yob is None:
            return False
        return survey_yob == register_yob

    def age_in_range(obs: LinkedObservation) -> bool:
        age = obs.covariates.get("age")
        if age is None:
            return False
        return cfg.age_range[0] <= age <= cfg.age_range[1]

    def above_marginal_threshold(obs: LinkedObservation) -> bool:
        if obs.period >= cfg.marginal_reliable_from:
            return True
        limit = cfg.marginal_limits.get(obs.period)
        if limit is None:
            raise ConfigurationError(
                f"no marginal-employment limit configured for year {obs.period}"
            )
        if obs.register_income is None:
            return False
        return obs.register_income > limit

    def income_not_imputed(obs: LinkedObservation) -> bool:
        if not cfg.drop_imputed:
            return True
        imputed = obs.covariates.get("imputed")
        if imputed is None:
            return False
        return imputed < 0.5

    steps = (
        ("below_assessment_limit", below_assessment_limit),
        ("typical_pay_structure", typical_pay_structure),
        ("error_within_cap", error_within_cap),
        ("consistent_birth_year", consistent_birth_year),
        ("age_in_range", age_in_range),
        ("above_marginal_threshold", above_marginal_threshold),
        ("income_not_imputed", income_not_imputed),
    )

    remaining = list(panel)
    entries = [LedgerEntry("input", panel.n_units(), len(remaining))]
    for step_name, keep in steps:
        remaining = [obs for obs in remaining if keep(obs)]
        entries.append(
            LedgerEntry(step_name, len({o.unit_id for o in remaining}), len(remaining))
        )
    return panel_from_records(remaining), RestrictionLedger(tuple(entries))


# ------------------------------------------------------------------ CSV I/O

_SPELL_COLUMNS = ("unit_id", "spell_id", "start", "end", "daily_income", "spell_kind")
_SURVEY_COLUMNS = ("unit_id", "period", "interview_month", "survey_income")


def read_spells_csv(path) -> list[RegisterSpell]:
    """Read spells from CSV: unit_id, spell_id, start (ISO date), end (ISO
    date), daily_income, spell_kind, plus numeric employer attribute columns."""
    spells = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [c for c in _SPELL_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: spell CSV lacks required columns {missing}")
        attr_names = [c for c in header if c not in _SPELL_COLUMNS]
        for row_number, row in enumerate(reader, start=2):
            try:
                start = datetime.date.fromisoformat(row["start"].strip())
                end = datetime.date.fromisoformat(row["end"].strip())
            except ValueError as exc:
                raise DataError(f"{path}: row {row_number}: bad date: {exc}") from None
            try:
                daily = float(row["daily_income"])
            except ValueError:
                raise DataError(
                    f"{path}: row {row_number}: daily_income is not a number: "
                    f"{row['daily_income']!r}"
                ) from None
            attrs = {}
            for name in attr_names:
                text = (row[name] or "").strip()
                if text == "":
                    continue
                try:
                    attrs[name] = float(text)
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_number}: employer attribute {name} "
                        f"is not a number: {text!r}"
                    ) from None
            spells.append(
                RegisterSpell(
                    unit_id=row["unit_id"].strip(),
                    spell_id=row["spell_id"].strip(),
                    start=start,
                    end=end,
                    daily_income=daily,
                    spell_kind=row["spell_kind"].strip(),
                    employer_attrs=attrs,
                )
            )
    return spells


def read_survey_csv(path) -> list[SurveyResponse]:
    """Read survey responses from CSV: unit_id, period, interview_month,
    survey_income, optional weight and module_tag, plus covariate columns."""
    responses = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [c for c in _SURVEY_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: survey CSV lacks required columns {missing}")
        reserved = set(_SURVEY_COLUMNS) | {"weight", "module_tag"}
        covariate_names = [c for c in header if c not in reserved]
        for row_number, row in enumerate(reader, start=2):
            def number(name: str, required: bool = True) -> float | None:
                text = (row.get(name) or "").strip()
                if text == "":
                    if required:
                        raise DataError(f"{path}: row {row_number}: {name} is empty")
                    return None
                try:
                    return float(text)
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_number}: {name} is not a number: {text!r}"
                    ) from None

            covariates = {}
            for name in covariate_names:
                value = number(name, required=False)
                if value is not None:
                    covariates[name] = value
            weight = number("weight", required=False) if "weight" in header else None
            module_tag = (row.get("module_tag") or "").strip() or "core"
            responses.append(
                SurveyResponse(
                    unit_id=row["unit_id"].strip(),
                    period=int(number("period")),
                    interview_month=int(number("interview_month")),
                    survey_income=number("survey_income", required=False),
                    weight=1.0 if weight is None else weight,
                    module_tag=module_tag,
                    covariates=covariates,
                )
            )
    return responses


def read_assessment_limits_csv(path) -> dict[tuple[int, str], float]:
    """Read assessment limits from CSV with columns year, region, limit."""
    limits: dict[tuple[int, str], float] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        for field_name in ("year", "region", "limit"):
            if field_name not in (reader.fieldnames or []):
                raise DataError(f"{path}: limits CSV lacks column {field_name!r}")
        for row_number, row in enumerate(reader, start=2):
            try:
                limits[(int(row["year"]), row["region"].strip())] = float(row["limit"])
            except ValueError as exc:
                raise DataError(f"{path}: row {row_number}: {exc}") from None
    return limits


def read_marginal_limits_csv(path) -> dict[int, float]:
    """Read marginal-employment thresholds from CSV with columns year, limit."""
    limits: dict[int, float] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        for field_name in ("year", "limit"):
            if field_name not in (reader.fieldnames or []):
                raise DataError(f"{path}: limits CSV lacks column {field_name!r}")
        for row_number, row in enumerate(reader, start=2):
            try:
                limits[int(row["year"])] = float(row["limit"])
            except ValueError as exc:
                raise DataError(f"{path}: row {row_number}: {exc}") from None
    return limits
