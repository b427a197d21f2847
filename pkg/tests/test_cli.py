"""Tests for command dispatch, exit codes and report rendering."""

import json
from dataclasses import replace

import pytest

from certify import Verdict, check_car_rel
from cli import (
    EXIT_CAP,
    EXIT_INTERNAL,
    EXIT_OFF_SUPPORT,
    EXIT_OK,
    EXIT_PARSE,
    RunConfig,
    render_report,
    run,
)
from config import FIXTURES_DIR
from main import main
from scenarios import catalog


def _make_config(command: str, *inputs: str, **kwargs) -> RunConfig:
    return RunConfig(command=command, inputs=tuple(str(FIXTURES_DIR / name) for name in inputs), **kwargs)


def _flipped_rel(model, tol):
    cert = check_car_rel(model, tol=tol)
    return replace(cert, verdict=Verdict.FAILS if cert.holds else Verdict.HOLDS)


def _without_timing(text: str) -> dict:
    doc = json.loads(text)
    doc.pop("wall_clock_seconds")
    return doc


class TestCertify:
    def test_ignorable_fixture(self, tmp_path):
        out = tmp_path / "report.json"
        code, report = run(_make_config("certify", "m1_ignorable.json", output=str(out)))
        assert code == EXIT_OK
        assert all(c["verdict"] == "holds" for c in report.certificates)
        assert report.scenarios[0]["mismatches"] == {}
        assert json.loads(out.read_text())["command"] == "certify"

    def test_anticipating_fixture(self, tmp_path):
        code, report = run(_make_config("certify", "m1_anticipating.json", output=str(tmp_path / "r.json")))
        assert code == EXIT_OK
        dyn = next(c for c in report.certificates if c["condition"] == "CAR(DYN)")
        assert dyn["verdict"] == "fails"
        assert dyn["witness"]["t"] == 2
        fact = next(c for c in report.certificates if c["condition"] == "factorization")
        assert fact["verdict"] == "precondition-failed"
        dep = next(c for c in report.certificates if c["condition"] == "dependence class")
        assert dep["verdict"] == "holds"
        assert dep["detail"]["measured"] == "anticipating"

    def test_scenario_flag_and_tolerance(self, tmp_path):
        config = RunConfig(command="certify", scenario="right_censor_independent", tol=1e-10, output=str(tmp_path / "r.json"))
        code, report = run(config)
        assert code == EXIT_OK
        assert report.tolerances["derived"].provenance == "cli"
        assert any(c["condition"] == "independent censoring" for c in report.certificates)

    def test_malformed_file(self, tmp_path):
        out = tmp_path / "report.json"
        code, report = run(_make_config("certify", "malformed.json", output=str(out)))
        assert code == EXIT_PARSE
        assert report is None
        assert not out.exists()

    def test_unknown_scenario(self, tmp_path):
        code, _ = run(RunConfig(command="certify", scenario="nope", output=str(tmp_path / "r.json")))
        assert code == EXIT_PARSE

    def test_no_input(self, tmp_path):
        code, _ = run(RunConfig(command="certify", output=str(tmp_path / "r.json")))
        assert code == EXIT_PARSE

    def test_cap(self, tmp_path):
        code, _ = run(_make_config("certify", "m1_ignorable.json", cap=10, output=str(tmp_path / "r.json")))
        assert code == EXIT_CAP

    def test_reference_off_grid(self, tmp_path):
        model = tmp_path / "off.json"
        model.write_text('{"scenario": "m1_ignorable", "params": {"theta0": "0.4"}}')
        code, _ = run(RunConfig(command="certify", inputs=(str(model),), output=str(tmp_path / "r.json")))
        assert code == EXIT_OFF_SUPPORT


class TestBattery:
    def test_zero_models(self, tmp_path):
        code, report = run(RunConfig(command="battery", n=0, output=str(tmp_path / "r.json")))
        assert code == EXIT_OK
        assert report.battery["checked"] == 0
        assert report.battery["violations"] == 0

    def test_small_run(self, tmp_path):
        code, report = run(RunConfig(command="battery", n=5, seed=7, output=str(tmp_path / "r.json")))
        assert code == EXIT_OK
        assert report.battery["checked"] == 5
        assert report.battery["arrows_checked"] > 0
        assert report.battery["counterexamples"] == []

    def test_cap_skips_models(self, tmp_path):
        code, report = run(RunConfig(command="battery", n=4, cap=1, output=str(tmp_path / "r.json")))
        assert code == EXIT_OK
        assert report.battery["skipped_cap"] == 4
        assert report.battery["checked"] == 0

    def test_broken_certifier_is_reported(self, tmp_path):
        out = tmp_path / "r.json"
        code, report = run(RunConfig(command="battery", n=3, output=str(out)), certifiers={"car_rel": _flipped_rel})
        assert code == EXIT_INTERNAL
        assert report.battery["violations"] == 3
        example = report.battery["counterexamples"][0]
        assert "CAR(GCMP) <=> CAR(REL)" in example["violations"]
        assert example["shrunk_spec"]["horizon"] == 1
        assert json.loads(out.read_text())["battery"]["violations"] == 3


class TestOtherCommands:
    def test_verify_example_is_stable(self, tmp_path):
        first, second = tmp_path / "a.json", tmp_path / "b.json"
        code_a, report = run(RunConfig(command="verify-example", output=str(first)))
        code_b, _ = run(RunConfig(command="verify-example", output=str(second)))
        assert code_a == code_b == EXIT_OK
        assert all(e["ok"] for e in report.examples)
        assert [e["expected"] for e in report.examples] == [0.76, 0.6, 0.6, 1.4, 0.84, 1.96, 0.6]
        assert _without_timing(first.read_text()) == _without_timing(second.read_text())

    def test_report_keys_are_sorted(self, tmp_path):
        _, report = run(RunConfig(command="verify-example", output=str(tmp_path / "r.json")))
        text = render_report(report)
        assert text.endswith("\n")
        keys = list(json.loads(text))
        assert keys == sorted(keys)

    def test_list_scenarios(self, tmp_path):
        code, report = run(RunConfig(command="list-scenarios", output=str(tmp_path / "r.json")))
        assert code == EXIT_OK
        assert [s["name"] for s in report.scenarios] == [s.name for s in catalog()]

    def test_estimate_population_only(self, tmp_path):
        config = _make_config("estimate", "study_m1_anticipating.json", n=0, output=str(tmp_path / "r.json"))
        code, report = run(config)
        assert code == EXIT_OK
        table = report.estimation[0]
        assert table["sample"] == {}
        assert table["sample_size"] == 0
        assert table["population"]["ignoring"]["argmax"] == pytest.approx(0.57 / 1.62, abs=1e-3)

    def test_estimate_needs_scenario_file(self, tmp_path):
        code, _ = run(_make_config("estimate", "table_observed.json", output=str(tmp_path / "r.json")))
        assert code == EXIT_PARSE

    def test_unknown_command(self):
        with pytest.raises(ValueError):
            RunConfig(command="plot")


class TestMain:
    def test_main_writes_report(self, tmp_path):
        out = tmp_path / "r.json"
        assert main(["verify-example", "--output", str(out)]) == EXIT_OK
        assert json.loads(out.read_text())["tool_version"]

    def test_main_prints_to_stdout(self, capsys):
        assert main(["list-scenarios"]) == EXIT_OK
        assert '"command": "list-scenarios"' in capsys.readouterr().out

    def test_main_exit_code_on_parse_error(self):
        assert main(["certify", "--input", str(FIXTURES_DIR / "malformed.json")]) == EXIT_PARSE
