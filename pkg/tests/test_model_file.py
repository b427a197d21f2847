"""Tests for model-file parsing and model building."""

import json

import pytest

from certify import NotApplicableError, check_car_abs, check_car_dyn, check_car_gcmp, check_independent_censoring
from config import FIXTURES_DIR
from gcmp import ParameterError
from model_file import (
    ModelFileError,
    build_model,
    load_model_file,
    numbers,
    parse_model_text,
    study_from,
)
from scenarios import UnknownScenarioError
from schemas import ScenarioModelFile, TableModelFile


def _fixture_text(name: str) -> str:
    return (FIXTURES_DIR / name).read_text(encoding="utf-8")


class TestParse:
    def test_scenario_file(self):
        doc = load_model_file(FIXTURES_DIR / "m1_ignorable.json")
        assert isinstance(doc, ScenarioModelFile)
        model, scenario = build_model(doc)
        assert scenario.name == "m1_ignorable"
        assert model.theta_grid == (0.3, 0.5)
        assert model.psi0 == (0.5, 0.5)

    def test_table_file(self):
        doc = load_model_file(FIXTURES_DIR / "table_observed.json")
        assert isinstance(doc, TableModelFile)
        model, scenario = build_model(doc)
        assert scenario is None
        assert model.space.size == 64
        assert model.reference == ("a", "p")
        assert check_car_dyn(model).holds
        assert check_car_gcmp(model).holds
        assert check_car_abs(model).holds
        with pytest.raises(NotApplicableError):
            check_independent_censoring(model)

    def test_malformed_json_reports_position(self):
        with pytest.raises(ModelFileError) as excinfo:
            load_model_file(FIXTURES_DIR / "malformed.json")
        assert (excinfo.value.line, excinfo.value.column) == (5, 5)
        assert "line 5, column 5" in str(excinfo.value)

    def test_schema_violation(self):
        raw = json.loads(_fixture_text("table_observed.json"))
        raw["mechanism"]["tables"]["p"][0]["p"] = "1.5"
        with pytest.raises(ModelFileError, match="mechanism.tables.p.0.p"):
            parse_model_text(json.dumps(raw))

    def test_unknown_field(self):
        with pytest.raises(ModelFileError, match="colour"):
            parse_model_text('{"scenario": "m1_ignorable", "colour": "red"}')

    def test_top_level_must_be_object(self):
        with pytest.raises(ModelFileError, match="object"):
            parse_model_text("[1, 2]")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelFileError, match="cannot read"):
            load_model_file(tmp_path / "absent.json")

    def test_mismatched_theta_labels(self):
        raw = json.loads(_fixture_text("table_observed.json"))
        del raw["process"]["initial"]["b"]
        with pytest.raises(ModelFileError, match="theta labels"):
            parse_model_text(json.dumps(raw))


class TestBuild:
    def test_unknown_scenario(self):
        doc = parse_model_text('{"scenario": "no_such_scheme"}')
        with pytest.raises(UnknownScenarioError):
            build_model(doc)

    def test_reference_off_grid(self):
        doc = parse_model_text('{"scenario": "m1_ignorable", "params": {"theta0": "0.4"}}')
        with pytest.raises(ParameterError):
            build_model(doc)

    def test_numbers(self):
        assert numbers({"a": ["0.3", "x", "NaN"], "b": "1e-3"}) == {"a": [0.3, "x", "NaN"], "b": 0.001}
        assert numbers(7) == 7


class TestStudyBlock:
    def test_study_from_file(self):
        doc = load_model_file(FIXTURES_DIR / "study_m1_anticipating.json")
        study = study_from(doc)
        assert study.scenario.name == "m1_anticipating"
        assert study.true_theta == 0.3
        assert (study.n_replicates, study.sample_size, study.seed) == (50, 5000, 20050102)
        assert study.search.kind == "golden"
        assert study.search.bracket == (0.02, 0.98)

    def test_missing_study_block(self):
        doc = load_model_file(FIXTURES_DIR / "m1_ignorable.json")
        with pytest.raises(ModelFileError, match="no study block"):
            study_from(doc)

    def test_true_theta_defaults_to_scenario(self):
        doc = parse_model_text('{"scenario": "m1_ignorable", "study": {"n_replicates": 1, "sample_size": 10, "seed": 3}}')
        assert study_from(doc).true_theta == 0.3
