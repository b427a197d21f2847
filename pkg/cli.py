"""
Command implementations behind the ``gcmp`` entrypoint.

Each command builds a Report; ``run`` maps exceptions to exit codes and writes
the report once, as JSON with sorted keys.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from certify import (
    Certifier,
    NotApplicableError,
    ROffSupportError,
    battery_violates,
    check_car_abs,
    check_car_dyn,
    check_car_gcmp,
    check_car_loc,
    check_car_rel,
    check_dependence_class,
    check_factorization,
    check_ignorable,
    check_independent_censoring,
    random_model_spec,
    shrink_spec,
    table_model,
    theorem_battery,
)
from config import (
    BATTERY_MAX_HORIZON,
    BATTERY_MODELS,
    DEFAULT_SEED,
    DERIVED_TOL,
    REPORT_INDENT,
    SUM_TOL,
    TOOL_VERSION,
)
from estimation import EstimationStudy, SearchSpec, bias_report, make_rng, run_study
from gcmp import (
    MASK,
    JointModel,
    Observation,
    ParameterError,
)
from likelihood import (
    ObservationOffSupportError,
    conditional_lr,
    ignoring_lr,
    jacod_phi,
    observed_lr,
    survival_lr,
)
from model_file import ModelFileError, build_model, load_model_file, study_from
from pathspace import CapExceededError, CoarseningError, r_partition, x_partition
from scenarios import (
    Scenario,
    UnknownScenarioError,
    catalog,
    get_scenario,
    survival_hazard_spec,
    verify_scenario,
)
from schemas import Report, ScenarioModelFile, ToleranceEntry

logger = logging.getLogger(__name__)

COMMANDS = ("certify", "battery", "estimate", "list-scenarios", "verify-example")

EXIT_OK = 0
EXIT_PARSE = 3
EXIT_CAP = 4
EXIT_OFF_SUPPORT = 5
EXIT_INTERNAL = 6


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """One command invocation; echoed into the report."""

    command: str
    inputs: tuple[str, ...] = ()
    output: str | None = None
    seed: int = DEFAULT_SEED
    cap: int | None = None
    tol: float | None = None
    scenario: str | None = None
    n: int | None = None
    replicates: int | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")

    @property
    def derived_tol(self) -> float:
        return DERIVED_TOL if self.tol is None else self.tol

    def tolerances(self) -> dict[str, ToleranceEntry]:
        return {
            "derived": ToleranceEntry(value=self.derived_tol, provenance="default" if self.tol is None else "cli"),
            "sum": ToleranceEntry(value=SUM_TOL, provenance="default"),
        }

    def echo(self) -> dict[str, Any]:
        out = asdict(self)
        out["inputs"] = list(self.inputs)
        return out


@dataclass
class _Timer:
    start: float = field(default_factory=time.perf_counter)

    def elapsed(self) -> float:
        return round(time.perf_counter() - self.start, 3)


def _report(config: RunConfig, **sections: Any) -> Report:
    return Report(
        tool_version=TOOL_VERSION,
        command=config.command,
        config=config.echo(),
        tolerances=config.tolerances(),
        **sections,
    )


def render_report(report: Report) -> str:
    return json.dumps(report.model_dump(mode="json"), sort_keys=True, indent=REPORT_INDENT) + "\n"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _models(config: RunConfig) -> list[tuple[JointModel, Scenario | None]]:
    models = []
    for path in config.inputs:
        models.append(build_model(load_model_file(path), cap=config.cap))
    if config.scenario:
        scenario = get_scenario(config.scenario)
        models.append((scenario.build(cap=config.cap), scenario))
    if not models:
        raise ModelFileError("nothing to certify: give --input or --scenario")
    return models


def certify_model(model: JointModel, tol: float) -> list[dict[str, Any]]:
    """One certificate per condition, per response path where the condition is local."""
    space = model.space
    certs = [
        check_car_gcmp(model, tol),
        check_car_rel(model, tol),
        check_car_abs(model, tol),
        check_car_dyn(model, tol),
        check_dependence_class(model, tol),
    ]
    for r in model.r_paths():
        certs.append(check_car_loc(model, r, tol))
        certs.append(check_ignorable(model, r, tol=tol))
        if model.vertical is not None:
            certs.append(check_ignorable(model, r, vertical=model.vertical, tol=tol))
    certs.append(check_factorization(model, tol))
    try:
        certs.append(check_independent_censoring(model, tol))
    except NotApplicableError as exc:
        logger.info("independent censoring skipped: %s", exc)
    return [{"model": model.label, **cert.to_dict(space)} for cert in certs]


def cmd_certify(config: RunConfig) -> Report:
    certificates: list[dict[str, Any]] = []
    scenarios: list[dict[str, Any]] = []
    for model, scenario in _models(config):
        certificates += certify_model(model, config.derived_tol)
        if scenario is not None:
            mismatches = verify_scenario(scenario, model)
            scenarios.append({
                "name": scenario.name,
                "provenance": scenario.provenance,
                "mismatches": {k: list(v) for k, v in mismatches.items()},
            })
    return _report(config, certificates=certificates, scenarios=scenarios)


def cmd_battery(config: RunConfig, certifiers: Mapping[str, Certifier] | None = None) -> Report:
    """Theorem battery over randomized table models.

    ``certifiers`` replaces individual certificate functions, for harness
    self-tests with a deliberately broken certifier.
    """
    n = BATTERY_MODELS if config.n is None else config.n
    rng = make_rng(config.seed)
    checked, skipped, arrows = 0, 0, 0
    counterexamples: list[dict[str, Any]] = []
    for k in range(n):
        horizon = int(rng.integers(1, BATTERY_MAX_HORIZON + 1))
        spec = random_model_spec(rng, horizon)
        try:
            model = table_model(spec, cap=config.cap)
        except CapExceededError as exc:
            skipped += 1
            logger.warning("Battery model %d skipped: %s", k, exc)
            continue
        result = theorem_battery(model, certifiers=certifiers, tol=config.derived_tol)
        checked += 1
        arrows += len(result.arrows)
        if not result.ok:
            shrunk = shrink_spec(spec, lambda s: battery_violates(s, certifiers))
            counterexamples.append({
                "index": k,
                "violations": [f"{a.name}{a.scope}" for a in result.violations],
                "model": result.model,
                "shrunk_spec": shrunk,
            })
    battery = {
        "requested": n,
        "checked": checked,
        "skipped_cap": skipped,
        "arrows_checked": arrows,
        "violations": len(counterexamples),
        "counterexamples": counterexamples,
    }
    logger.info("Battery: %d checked, %d skipped, %d violating models", checked, skipped, len(counterexamples))
    return _report(config, battery=battery)


def _default_search(scenario: Scenario) -> SearchSpec:
    return SearchSpec("golden") if isinstance(scenario.true_theta, float) else SearchSpec("grid")


def _studies(config: RunConfig) -> list[EstimationStudy]:
    studies = []
    for path in config.inputs:
        doc = load_model_file(path)
        if not isinstance(doc, ScenarioModelFile):
            raise ModelFileError(f"{path}: estimation needs a scenario file")
        block = doc.study
        if block is not None and (config.n is not None or config.replicates is not None):
            block = block.model_copy(update={
                "sample_size": block.sample_size if config.n is None else config.n,
                "n_replicates": block.n_replicates if config.replicates is None else config.replicates,
            })
        studies.append(study_from(doc, block))
    if config.scenario:
        scenario = get_scenario(config.scenario)
        studies.append(EstimationStudy(
            scenario=scenario,
            true_theta=scenario.true_theta,
            search=_default_search(scenario),
            n_replicates=50 if config.replicates is None else config.replicates,
            sample_size=5000 if config.n is None else config.n,
            seed=config.seed,
        ))
    if not studies:
        raise ModelFileError("nothing to estimate: give --input or --scenario")
    return studies


def cmd_estimate(config: RunConfig) -> Report:
    tables = [bias_report(run_study(study, config.workers)) for study in _studies(config)]
    return _report(config, estimation=tables)


def cmd_list_scenarios(config: RunConfig) -> Report:
    rows = [
        {
            "name": s.name,
            "provenance": s.provenance,
            "defaults": {k: repr(v) for k, v in s.params().items()},
            "expected_certificates": dict(s.expected_certificates),
            "vertical": None if s.vertical is None else s.vertical.label,
        }
        for s in catalog()
    ]
    return _report(config, scenarios=rows)


def _example(name: str, value: float, expected: float, tol: float) -> dict[str, Any]:
    ok = bool(abs(value - expected) <= tol * max(1.0, abs(expected)))
    if not ok:
        logger.warning("Worked example %s: %r, expected %r", name, value, expected)
    return {"name": name, "value": value, "expected": expected, "ok": ok}


def cmd_verify_example(config: RunConfig) -> Report:
    """Recompute the frozen worked numbers from scratch."""
    tol = config.derived_tol
    theta, theta0 = 0.3, 0.5
    obs = Observation((1, 0), (1, MASK))
    ignorable = get_scenario("m1_ignorable").build()
    anticipating = get_scenario("m1_anticipating").build()

    def observed(model: JointModel) -> float:
        return observed_lr(model, obs, (theta, model.psi0), (theta0, model.psi0)).value

    psi, psi0 = (0.7, 0.4), (0.5, 0.5)
    l_rx = conditional_lr(
        ignorable, r_partition(ignorable.space), x_partition(ignorable.space), (theta0, psi), (theta0, psi0)
    )
    on_x1_r2 = ignorable.space.index_of[next(p for p in ignorable.space.paths if p.x[0] == 1 and p.r == (1, 1))]
    hazard = survival_hazard_spec(4)
    examples = [
        _example("observed_lr m1_anticipating", observed(anticipating), 0.76, tol),
        _example("ignoring_lr m1_anticipating", ignoring_lr(anticipating, obs, theta, theta0).value, 0.6, tol),
        _example("observed_lr m1_ignorable", observed(ignorable), 0.6, tol),
        _example("L_{R|X} m1_ignorable", l_rx[on_x1_r2], 1.4, tol),
        _example("jacod_phi", jacod_phi([0.3, 0.3], [0.5, 0.5], [0, 1]), 0.84, tol),
        _example("survival_lr censored at 2", survival_lr(hazard, None, 2, theta, theta0), 1.96, tol),
        _example("survival_lr event at 1", survival_lr(hazard, 1, 1, theta, theta0), 0.6, tol),
    ]
    return _report(config, examples=examples)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

_DISPATCH: dict[str, Callable[[RunConfig], Report]] = {
    "certify": cmd_certify,
    "battery": cmd_battery,
    "estimate": cmd_estimate,
    "list-scenarios": cmd_list_scenarios,
    "verify-example": cmd_verify_example,
}


def exit_code_for(exc: Exception) -> int:
    if isinstance(exc, (ModelFileError, UnknownScenarioError)):
        return EXIT_PARSE
    if isinstance(exc, CapExceededError):
        return EXIT_CAP
    if isinstance(exc, (ParameterError, ROffSupportError, ObservationOffSupportError)):
        return EXIT_OFF_SUPPORT
    return EXIT_INTERNAL


def run(config: RunConfig, certifiers: Mapping[str, Certifier] | None = None) -> tuple[int, Report | None]:
    """Execute one command; on error no report is written."""
    timer = _Timer()
    try:
        if config.command == "battery":
            report = cmd_battery(config, certifiers)
        else:
            report = _DISPATCH[config.command](config)
    except CoarseningError as exc:
        code = exit_code_for(exc)
        logger.error("%s failed (exit %d): %s", config.command, code, exc)
        return code, None
    report = report.model_copy(update={"wall_clock_seconds": timer.elapsed()})

    code = EXIT_OK
    if report.examples and not all(e["ok"] for e in report.examples):
        code = EXIT_INTERNAL
    if report.battery and report.battery["violations"]:
        code = EXIT_INTERNAL

    text = render_report(report)
    if config.output:
        Path(config.output).write_text(text, encoding="utf-8")
        logger.info("Report written to %s", config.output)
    else:
        print(text, end="")
    return code, report
