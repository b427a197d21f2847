"""
Model files: JSON documents describing a joint model.

Two forms are accepted. A scenario file names a catalog entry and overrides
its parameters; a table file tabulates a Markov process and a response table.
Probabilities and parameter values may be written as decimal strings
("0.3") to keep them exact in the file.
"""
from __future__ import annotations

import json
import logging
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from certify import table_model
from estimation import EstimationStudy, SearchSpec
from gcmp import JointModel
from pathspace import CoarseningError
from scenarios import Scenario, freeze, get_scenario
from schemas import ScenarioModelFile, SearchModel, StudyModel, TableModelFile

logger = logging.getLogger(__name__)

ModelDocument = ScenarioModelFile | TableModelFile


# ---------------------------------------------------------------------------
# Custom exceptions
# ---------------------------------------------------------------------------

class ModelFileError(CoarseningError):
    """Raised when a model file cannot be parsed; carries the position when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"parse error{where}: {message}")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def parse_model_text(text: str, source: str = "<string>") -> ModelDocument:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{source}: {exc.msg}", exc.lineno, exc.colno) from exc
    if not isinstance(raw, dict):
        raise ModelFileError(f"{source}: top level must be an object", 1, 1)
    schema = ScenarioModelFile if "scenario" in raw else TableModelFile
    try:
        return schema.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(part) for part in first["loc"])
        raise ModelFileError(f"{source}: {loc}: {first['msg']}") from exc


def load_model_file(path: str | Path) -> ModelDocument:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFileError(f"cannot read {path}: {exc.strerror}") from exc
    logger.info("Loading model file %s", path)
    return parse_model_text(text, str(path))


def numbers(value: Any) -> Any:
    """Decimal strings become floats, recursively; other strings are labels."""
    if isinstance(value, dict):
        return {k: numbers(v) for k, v in value.items()}
    if isinstance(value, list):
        return [numbers(v) for v in value]
    if isinstance(value, str):
        try:
            parsed = Decimal(value)
        except InvalidOperation:
            return value
        return float(parsed) if parsed.is_finite() else value
    if isinstance(value, Decimal):
        return float(value)
    return value


# ---------------------------------------------------------------------------
# Building
# ---------------------------------------------------------------------------

def build_model(doc: ModelDocument, cap: int | None = None) -> tuple[JointModel, Scenario | None]:
    """Joint model of a parsed document, with its scenario when it names one."""
    if isinstance(doc, ScenarioModelFile):
        scenario = get_scenario(doc.scenario)
        return scenario.build(numbers(doc.params), cap=cap), scenario
    spec = doc.model_dump(mode="json", exclude={"study"})
    return table_model(spec, cap=cap), None


def search_spec(search: SearchModel) -> SearchSpec:
    grid = None if search.grid is None else freeze(numbers(search.grid))
    return SearchSpec(search.kind, grid, tuple(search.bracket), search.tol, search.coarse_points)


def study_from(doc: ScenarioModelFile, study: StudyModel | None = None) -> EstimationStudy:
    """Estimation study of a scenario document; ``study`` overrides the file's block."""
    block = study or doc.study
    if block is None:
        raise ModelFileError(f"scenario {doc.scenario!r} has no study block")
    scenario = get_scenario(doc.scenario)
    overrides = freeze(numbers(doc.params))
    true_theta = freeze(numbers(block.true_theta))
    if true_theta is None:
        true_theta = scenario.true_theta
    return EstimationStudy(
        scenario=scenario,
        true_theta=true_theta,
        search=search_spec(block.search),
        n_replicates=block.n_replicates,
        sample_size=block.sample_size,
        seed=block.seed,
        true_psi=freeze(numbers(block.true_psi)),
        overrides=dict(overrides),
    )
