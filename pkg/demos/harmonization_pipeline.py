# From raw register spells and survey rows to an analysis sample.
#
# The register side stores employment spells with daily pay; the survey side
# stores monthly incomes and interview dates. Linking picks, per survey row,
# the best-paid employment spell covering the full month before the
# interview, converts its daily pay to a monthly figure, and merges employer
# attributes. The restriction funnel then drops observations that cannot be
# compared cleanly, counting every step.
#
# Run:  python3 demos/harmonization_pipeline.py

import datetime

from earnlink import (
    RegisterSpell,
    RestrictionConfig,
    SurveyResponse,
    apply_restrictions,
    daily_to_monthly,
    link_surveys_to_register,
)


def spell(unit, sid, start, end, daily, kind="employment", **attrs):
    return RegisterSpell(
        unit_id=unit, spell_id=sid,
        start=datetime.date.fromisoformat(start),
        end=datetime.date.fromisoformat(end),
        daily_income=daily, spell_kind=kind, employer_attrs=attrs,
    )


def survey(unit, income, month=6, **covariates):
    base = {"east": 0.0, "occupation": 512.0, "birth_year_survey": 1965.0,
            "birth_year_register": 1965.0, "age": 40.0, "imputed": 0.0}
    base.update(covariates)
    return SurveyResponse(unit_id=unit, period=2005, interview_month=month,
                          survey_income=income, covariates=base)


SPELLS = [
    spell("anna", "main", "2004-09-01", "2005-12-31", 118.0, firm_size=850),
    spell("anna", "side", "2005-05-15", "2005-08-31", 40.0),
    spell("bert", "job", "2005-01-01", "2005-04-30", 95.0),
    spell("carl", "ue", "2005-01-01", "2005-12-31", 55.0,
          kind="unemployment_benefit"),
    spell("dora", "job", "2005-01-01", "2005-12-31", 210.0),
    spell("emil", "job", "2005-01-01", "2005-12-31", 101.0),
]

SURVEYS = [
    survey("anna", 3500.0),
    survey("bert", 2900.0, month=4),   # spell covers March, the target month
    survey("carl", 1700.0),            # benefits only: no main spell
    survey("dora", 6600.0),            # top earner, above the assessment cap
    survey("emil", 9500.0),            # implausible report vs register 3078
]

panel = link_surveys_to_register(SURVEYS, SPELLS)
print("Linked observations")
for obs in panel.observations:
    register = "-" if obs.register_income is None else f"{obs.register_income:8.2f}"
    print(f"  {obs.unit_id:<5} survey {obs.survey_income:8.2f}  register {register}"
          f"  employed {obs.employed}")

print()
print(f"Daily pay 118.00 becomes monthly {daily_to_monthly(118.0):.4f}")
print("(365.75 days per year averaged over the leap cycle, divided by 12)")

cfg = RestrictionConfig(
    assessment_limits={(2005, "west"): 5200.0, (2005, "east"): 4400.0},
    error_cap=1.5,
    excluded_occupations=frozenset({711.0}),
)
kept, ledger = apply_restrictions(panel, cfg)

print()
print("Restriction funnel")
previous = None
for entry in ledger:
    dropped = "" if previous is None else f"  (-{previous - entry.units_remaining})"
    print(f"  {entry.step_name:<26} {entry.units_remaining:>3} units{dropped}")
    previous = entry.units_remaining

print()
print("Survivors:", ", ".join(kept.units()))
print("carl had no employment spell, dora sits above the 0.98 * 5200 cap,")
print("emil's survey income is more than 150 percent off the register figure.")
