"""Event-time assignment and weakly/strongly balanced subpanels."""
from __future__ import annotations

from dataclasses import dataclass

from .exceptions import ConfigurationError, DataError
from .panel_core import LinkedObservation, Panel

BALANCE_MODES = ("weak", "strong")


@dataclass(frozen=True, slots=True)
class BalanceSpec:
    """Horizon T and balancing mode.

    weak keeps every unit with its full pre-gap run of event times; strong
    keeps only units observed at every t in 1..T and truncates them to
    exactly T periods.
    """

    horizon: int
    mode: str = "weak"

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ConfigurationError(f"horizon must be >= 1, got {self.horizon!r}")
        if self.mode not in BALANCE_MODES:
            raise ConfigurationError(
                f"mode must be one of {BALANCE_MODES}, got {self.mode!r}"
            )


def _qualifies(obs: LinkedObservation) -> bool:
    return obs.employed and obs.has_both_incomes


def assign_event_time(panel: Panel) -> Panel:
    """Assign per-unit event time t = 1, 2, ... over consecutive years.

    t = 1 is a unit's first period with active employment and both incomes
    valid; t increments while the following calendar year is present and
    qualifies too. Observations after the first gap (a missing year, a
    non-employment spell, or invalid incomes) are discarded, as are
    observations before t = 1. Units that never qualify are absent from the
    output. The result is invariant to the input ordering because panels are
    deterministically sorted.
    """
    runs: dict[str, dict[int, int]] = {}
    kept: list[LinkedObservation] = []
    by_unit: dict[str, list[LinkedObservation]] = {}
    for obs in panel:
        by_unit.setdefault(obs.unit_id, []).append(obs)
    for unit_id, observations in by_unit.items():
        run: dict[int, int] = {}
        run_obs: list[LinkedObservation] = []
        previous_period: int | None = None
        for obs in observations:  # already sorted by period
            if not run:
                if _qualifies(obs):
                    run[obs.period] = 1
                    run_obs.append(obs)
                    previous_period = obs.period
                continue
            if obs.period == previous_period + 1 and _qualifies(obs):
                run[obs.period] = len(run) + 1
                run_obs.append(obs)
                previous_period = obs.period
            else:
                break
        if run:
            runs[unit_id] = run
            kept.extend(run_obs)
    return Panel(tuple(kept), runs)


def build_balanced(panel: Panel, spec: BalanceSpec) -> Panel:
    """Restrict an event-indexed panel to the requested balance.

    weak mode returns the panel unchanged (every unit, every event time).
    strong mode keeps units whose run reaches spec.horizon, truncated to
    exactly that many periods; an unattainable horizon yields an empty panel.
    """
    if panel.event_index is None:
        raise DataError("assign_event_time must run before build_balanced")
    if spec.mode == "weak":
        return panel
    horizon = spec.horizon
    surviving = {
        unit for unit, run in panel.event_index.items() if len(run) >= horizon
    }
    observations = tuple(
        obs
        for obs in panel
        if obs.unit_id in surviving and panel.event_index[obs.unit_id][obs.period] <= horizon
    )
    index = {
        unit: {period: t for period, t in run.items() if t <= horizon}
        for unit, run in panel.event_index.items()
        if unit in surviving
    }
    return Panel(observations, index)
