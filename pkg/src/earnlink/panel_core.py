"""Data model shared by every other module.

A LinkedObservation is one person-period carrying both the survey report and
the register value of monthly income. A Panel is an immutable, deterministic
collection of observations keyed by (unit_id, period). The three measurement
error notions (log, nominal, relative) are derived jointly from the log
difference so that their defining identities hold at full precision.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .exceptions import DataError

MODULE_TAGS = ("core", "innovation")

# Column names understood by Panel.column() in addition to covariate names.
_DERIVED_COLUMNS = (
    "survey_income",
    "register_income",
    "log_survey",
    "log_register",
    "log_error",
    "u",
    "survey",
    "register",
    "nominal_error",
    "relative_error",
    "period",
    "weight",
    "employed",
    "event_time",
)


def _check_income(value: float | None, name: str, unit_id, period) -> None:
    if value is None:
        return
    if not math.isfinite(value) or value <= 0.0:
        raise DataError(
            f"{name} must be a positive finite number, got {value!r} "
            f"for unit {unit_id!r}, period {period!r}"
        )


@dataclass(frozen=True, slots=True)
class LinkedObservation:
    """One person-period of linked survey and register income.

    Incomes are monthly currency amounts and must be strictly positive when
    present (their logarithms must exist); ``None`` means missing. The
    covariate map holds any real- or indicator-valued attributes (female,
    east, age, ...). ``module_tag`` records which survey module the
    observation belongs to, because sampling weights are only comparable
    within a module.
    """

    unit_id: str
    period: int
    survey_income: float | None = None
    register_income: float | None = None
    employed: bool = True
    weight: float = 1.0
    covariates: Mapping[str, float] = field(default_factory=dict)
    module_tag: str = "core"

    def __post_init__(self) -> None:
        _check_income(self.survey_income, "survey_income", self.unit_id, self.period)
        _check_income(self.register_income, "register_income", self.unit_id, self.period)
        if not math.isfinite(self.weight) or self.weight < 0.0:
            raise DataError(
                f"weight must be finite and >= 0, got {self.weight!r} "
                f"for unit {self.unit_id!r}, period {self.period!r}"
            )
        if self.module_tag not in MODULE_TAGS:
            raise DataError(
                f"module_tag must be one of {MODULE_TAGS}, got {self.module_tag!r}"
            )
        for name, value in self.covariates.items():
            if not math.isfinite(value):
                raise DataError(
                    f"covariate {name!r} must be finite, got {value!r} "
                    f"for unit {self.unit_id!r}, period {self.period!r}"
                )

    @property
    def has_both_incomes(self) -> bool:
        return self.survey_income is not None and self.register_income is not None


@dataclass(frozen=True, slots=True)
class ErrorTriple:
    """The three error notions for one observation.

    log_error is u = log(survey) - log(register); relative_error equals
    exp(u) - 1 and nominal_error equals register * relative_error. All three
    are derived from u so the identities hold to machine precision even when
    the two incomes are nearly equal.
    """

    log_error: float
    nominal_error: float
    relative_error: float


def compute_error_triple(obs: LinkedObservation) -> ErrorTriple:
    """Derive the (log, nominal, relative) error triple of one observation.

    Raises DataError when either income is missing; nonpositive incomes are
    already rejected at construction time.
    """
    if obs.survey_income is None:
        raise DataError(
            f"survey_income is missing for unit {obs.unit_id!r}, period {obs.period!r}"
        )
    if obs.register_income is None:
        raise DataError(
            f"register_income is missing for unit {obs.unit_id!r}, period {obs.period!r}"
        )
    log_error = math.log(obs.survey_income) - math.log(obs.register_income)
    relative_error = math.expm1(log_error)
    nominal_error = obs.register_income * relative_error
    return ErrorTriple(log_error, nominal_error, relative_error)


@dataclass(frozen=True)
class Panel:
    """Immutable, deterministically ordered collection of observations.

    Observations are sorted by (unit_id, period). ``event_index`` maps
    unit_id -> {period -> event time t in 1, 2, ...}; it is None until
    event time has been assigned (see the balancing module) and is derived
    state, never serialized.
    """

    observations: tuple[LinkedObservation, ...]
    event_index: Mapping[str, Mapping[int, int]] | None = None

    def __len__(self) -> int:
        return len(self.observations)

    def __iter__(self) -> Iterator[LinkedObservation]:
        return iter(self.observations)

    def units(self) -> list[str]:
        seen: dict[str, None] = {}
        for obs in self.observations:
            seen.setdefault(obs.unit_id, None)
        return list(seen.keys())

    def n_units(self) -> int:
        return len({obs.unit_id for obs in self.observations})

    def covariate_names(self) -> list[str]:
        names: set[str] = set()
        for obs in self.observations:
            names.update(obs.covariates)
        return sorted(names)

    def with_event_index(self, event_index: Mapping[str, Mapping[int, int]]) -> "Panel":
        return Panel(self.observations, event_index)

    def event_time(self, obs: LinkedObservation) -> int | None:
        if self.event_index is None:
            return None
        return self.event_index.get(obs.unit_id, {}).get(obs.period)

    def column(self, name: str) -> np.ndarray:
        """One value per observation as float64; NaN where undefined.

        Recognized names beyond covariates: survey_income, register_income,
        log_survey (alias ``survey``), log_register (alias ``register``),
        log_error (alias ``u``), nominal_error, relative_error, period,
        weight, employed, event_time. The ``survey``/``register`` aliases are
        log incomes, matching the regression conventions used throughout.
        """
        out = np.full(len(self.observations), np.nan)
        if name in ("survey_income", "register_income", "period", "weight", "employed"):
            for i, obs in enumerate(self.observations):
                value = getattr(obs, name)
                if value is not None:
                    out[i] = float(value)
            return out
        if name in ("log_survey", "survey"):
            for i, obs in enumerate(self.observations):
                if obs.survey_income is not None:
                    out[i] = math.log(obs.survey_income)
            return out
        if name in ("log_register", "register"):
            for i, obs in enumerate(self.observations):
                if obs.register_income is not None:
                    out[i] = math.log(obs.register_income)
            return out
        if name in ("log_error", "u", "nominal_error", "relative_error"):
            attr = "log_error" if name == "u" else name
            for i, obs in enumerate(self.observations):
                if obs.has_both_incomes:
                    out[i] = getattr(compute_error_triple(obs), attr)
            return out
        if name == "event_time":
            for i, obs in enumerate(self.observations):
                t = self.event_time(obs)
                if t is not None:
                    out[i] = float(t)
            return out
        for i, obs in enumerate(self.observations):
            value = obs.covariates.get(name)
            if value is not None:
                out[i] = float(value)
        return out


def panel_from_records(records: Iterable[LinkedObservation]) -> Panel:
    """Build a Panel, sorting deterministically and rejecting duplicate keys."""
    ordered = sorted(records, key=lambda o: (o.unit_id, o.period))
    for prev, cur in zip(ordered, ordered[1:]):
        if prev.unit_id == cur.unit_id and prev.period == cur.period:
            raise DataError(
                f"duplicate observation key (unit_id={cur.unit_id!r}, period={cur.period})"
            )
    return Panel(tuple(ordered))


# ------------------------------------------------------------------ CSV I/O

_FIXED_COLUMNS = ("unit_id", "period", "survey_income", "register_income",
                  "employed", "weight", "module_tag")


def _format_real(value: float | None) -> str:
    if value is None:
        return ""
    return format(float(value), ".17g")


def write_panel_csv(panel: Panel, path) -> None:
    """Write the panel in the documented CSV schema.

    Columns: unit_id, period, survey_income, register_income, employed,
    weight, module_tag, then every covariate name in sorted order. Empty
    cells mean missing. Reals are written with 17 significant digits so a
    read-write cycle is lossless.
    """
    covariates = panel.covariate_names()
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(list(_FIXED_COLUMNS) + covariates)
        for obs in panel:
            row = [
                obs.unit_id,
                str(obs.period),
                _format_real(obs.survey_income),
                _format_real(obs.register_income),
                "true" if obs.employed else "false",
                _format_real(obs.weight),
                obs.module_tag,
            ]
            for name in covariates:
                value = obs.covariates.get(name)
                row.append("" if value is None else _format_real(value))
            writer.writerow(row)


def _parse_bool(cell: str, row_number: int) -> bool:
    lowered = cell.strip().lower()
    if lowered in ("true", "1"):
        return True
    if lowered in ("false", "0"):
        return False
    raise DataError(f"row {row_number}: employed must be true/false/1/0, got {cell!r}")


def read_panel_csv(path) -> Panel:
    """Read a panel CSV (see write_panel_csv for the schema)."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        missing = [c for c in _FIXED_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: header lacks required columns {missing}")
        index = {name: header.index(name) for name in _FIXED_COLUMNS}
        covariate_cols = [
            (pos, name) for pos, name in enumerate(header) if name not in _FIXED_COLUMNS
        ]
        records = []
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {row_number} has {len(row)} cells, expected {len(header)}"
                )

            def cell(name: str) -> str:
                return row[index[name]].strip()

            def real(name: str) -> float | None:
                text = cell(name)
                if text == "":
                    return None
                try:
                    return float(text)
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_number}: {name} is not a number: {text!r}"
                    ) from None

            try:
                period = int(cell("period"))
            except ValueError:
                raise DataError(
                    f"{path}: row {row_number}: period is not an integer: {cell('period')!r}"
                ) from None
            weight = real("weight")
            covariates = {}
            for pos, name in covariate_cols:
                text = row[pos].strip()
                if text == "":
                    continue
                try:
                    covariates[name] = float(text)
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_number}: covariate {name} is not a number: {text!r}"
                    ) from None
            records.append(
                LinkedObservation(
                    unit_id=cell("unit_id"),
                    period=period,
                    survey_income=real("survey_income"),
                    register_income=real("register_income"),
                    employed=_parse_bool(cell("employed"), row_number),
                    weight=1.0 if weight is None else weight,
                    covariates=covariates,
                    module_tag=cell("module_tag") or "core",
                )
            )
    return panel_from_records(records)
