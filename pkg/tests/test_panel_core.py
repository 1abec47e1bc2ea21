"""Observation container, error identities, and CSV round trips."""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from earnlink import (
    DataError,
    LinkedObservation,
    Panel,
    compute_error_triple,
    panel_from_records,
    read_panel_csv,
    write_panel_csv,
)


def obs(unit="a", period=2001, survey=1000.0, register=1000.0, **kwargs):
    return LinkedObservation(
        unit_id=unit,
        period=period,
        survey_income=survey,
        register_income=register,
        employed=kwargs.pop("employed", True),
        weight=kwargs.pop("weight", 1.0),
        covariates=kwargs.pop("covariates", {}),
        module_tag=kwargs.pop("module_tag", "core"),
    )


class TestErrorTriple:
    def test_textbook_underreport(self):
        triple = compute_error_triple(obs(survey=1860.0, register=2000.0))
        assert triple.nominal_error == pytest.approx(-140.0)
        assert triple.relative_error == pytest.approx(-0.07)
        assert triple.log_error == pytest.approx(math.log(0.93))

    def test_exact_agreement_gives_zeros(self):
        triple = compute_error_triple(obs(survey=1234.5, register=1234.5))
        assert triple.log_error == 0.0
        assert triple.relative_error == 0.0
        assert triple.nominal_error == 0.0

    def test_overreport_is_positive(self):
        triple = compute_error_triple(obs(survey=2200.0, register=2000.0))
        assert triple.log_error == pytest.approx(math.log(1.1))
        assert triple.relative_error == pytest.approx(0.1)
        assert triple.nominal_error == pytest.approx(200.0)

    @given(
        register=st.floats(min_value=1e-3, max_value=1e8),
        ratio=st.floats(min_value=1e-6, max_value=1e6),
    )
    def test_identities_hold_everywhere(self, register, ratio):
        survey = register * ratio
        triple = compute_error_triple(obs(survey=survey, register=register))
        # relative = exp(log) - 1, computed without cancellation
        assert triple.relative_error == pytest.approx(
            math.expm1(triple.log_error), rel=1e-12, abs=0
        )
        # nominal = register * relative
        assert triple.nominal_error == pytest.approx(
            register * triple.relative_error, rel=1e-12, abs=0
        )
        # log recovers the income ratio
        assert register * math.exp(triple.log_error) == pytest.approx(
            survey, rel=1e-12
        )

    def test_missing_income_is_a_data_error(self):
        record = obs()
        object.__setattr__(record, "survey_income", None)
        with pytest.raises(DataError, match="survey_income"):
            compute_error_triple(record)


class TestLinkedObservation:
    def test_rejects_nonpositive_income(self):
        with pytest.raises(DataError):
            obs(survey=0.0)
        with pytest.raises(DataError):
            obs(register=-5.0)

    def test_rejects_nan_income(self):
        with pytest.raises(DataError):
            obs(survey=float("nan"))

    def test_rejects_negative_weight(self):
        with pytest.raises(DataError):
            obs(weight=-1.0)

    def test_rejects_unknown_module_tag(self):
        with pytest.raises(DataError):
            obs(module_tag="bonus")

    def test_missing_incomes_are_allowed_when_not_employed(self):
        record = LinkedObservation(
            unit_id="a",
            period=2001,
            survey_income=None,
            register_income=None,
            employed=False,
        )
        assert record.survey_income is None

    def test_is_immutable(self):
        record = obs()
        with pytest.raises(AttributeError):
            record.period = 2002


class TestPanel:
    def make(self):
        return panel_from_records(
            [
                obs("b", 2002, 1100.0, 1000.0, covariates={"age": 41.0}),
                obs("a", 2001, 900.0, 1000.0, covariates={"age": 30.0}),
                obs("a", 2002, 950.0, 1000.0),
                obs("b", 2001, 1050.0, 1000.0, covariates={"age": 40.0}),
            ]
        )

    def test_sorted_by_unit_then_period(self):
        panel = self.make()
        keys = [(o.unit_id, o.period) for o in panel.observations]
        assert keys == sorted(keys)

    def test_duplicate_key_is_rejected_with_key_in_message(self):
        with pytest.raises(DataError, match=r"a.*2001"):
            panel_from_records([obs("a", 2001), obs("a", 2001)])

    def test_units_and_counts(self):
        panel = self.make()
        assert panel.units() == ["a", "b"]
        assert panel.n_units() == 2
        assert len(panel) == 4

    def test_column_log_error(self):
        panel = self.make()
        expected = [math.log(900 / 1000), math.log(950 / 1000),
                    math.log(1050 / 1000), math.log(1100 / 1000)]
        np.testing.assert_allclose(panel.column("log_error"), expected, rtol=1e-12)
        np.testing.assert_allclose(panel.column("u"), expected, rtol=1e-12)

    def test_log_income_aliases(self):
        panel = self.make()
        np.testing.assert_array_equal(
            panel.column("survey"), panel.column("log_survey")
        )
        np.testing.assert_array_equal(
            panel.column("register"), panel.column("log_register")
        )
        np.testing.assert_allclose(
            panel.column("log_survey"),
            np.log(panel.column("survey_income")),
            rtol=1e-15,
        )

    def test_missing_covariate_is_nan(self):
        panel = self.make()
        age = panel.column("age")
        assert np.isnan(age[1])
        assert age[0] == 30.0

    def test_unknown_column_is_nan_everywhere(self):
        panel = self.make()
        assert np.isnan(panel.column("no_such_column")).all()

    def test_column_relative_and_nominal(self):
        panel = self.make()
        np.testing.assert_allclose(
            panel.column("relative_error"),
            np.expm1(panel.column("log_error")),
            rtol=1e-14,
        )
        np.testing.assert_allclose(
            panel.column("nominal_error"),
            panel.column("register_income") * np.expm1(panel.column("log_error")),
            rtol=1e-14,
        )


class TestCsvRoundTrip:
    def make(self):
        return panel_from_records(
            [
                obs("a", 2001, 1234.5678901234567, 1000.000000000001,
                    covariates={"east": 1.0, "age": 33.0}, weight=2.5),
                obs("a", 2002, 0.001, 12345678.9),
                LinkedObservation(
                    unit_id="b", period=2001, survey_income=None,
                    register_income=None, employed=False,
                    covariates={"east": 0.0},
                ),
                obs("b", 2002, 777.7, 777.7, module_tag="innovation"),
            ]
        )

    def test_round_trip_preserves_everything(self, tmp_path):
        panel = self.make()
        path = tmp_path / "panel.csv"
        write_panel_csv(panel, path)
        back = read_panel_csv(path)
        assert len(back) == len(panel)
        for left, right in zip(panel.observations, back.observations):
            assert left.unit_id == right.unit_id
            assert left.period == right.period
            assert left.survey_income == right.survey_income
            assert left.register_income == right.register_income
            assert left.employed == right.employed
            assert left.weight == right.weight
            assert left.module_tag == right.module_tag
            assert left.covariates == right.covariates

    def test_write_is_deterministic(self, tmp_path):
        panel = self.make()
        write_panel_csv(panel, tmp_path / "one.csv")
        write_panel_csv(panel, tmp_path / "two.csv")
        assert (tmp_path / "one.csv").read_bytes() == (tmp_path / "two.csv").read_bytes()

    def test_header_shape(self, tmp_path):
        panel = self.make()
        path = tmp_path / "panel.csv"
        write_panel_csv(panel, path)
        header = path.read_text().splitlines()[0].split(",")
        assert header[:7] == [
            "unit_id", "period", "survey_income", "register_income",
            "employed", "weight", "module_tag",
        ]
        assert header[7:] == sorted(header[7:])

    def test_empty_weight_cell_defaults_to_one(self, tmp_path):
        path = tmp_path / "bare.csv"
        path.write_text(
            "unit_id,period,survey_income,register_income,employed,weight,module_tag\n"
            "a,2001,100,110,true,,\n"
        )
        panel = read_panel_csv(path)
        assert panel.observations[0].weight == 1.0
        assert panel.observations[0].module_tag == "core"

    def test_missing_required_column_is_a_data_error(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("unit_id,period,survey_income\na,2001,100\n")
        with pytest.raises(DataError, match="register_income"):
            read_panel_csv(path)
