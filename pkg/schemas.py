"""Pydantic models for model files and command reports."""

from decimal import Decimal
from typing import Annotated, Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import COARSE_GRID_POINTS, DEFAULT_BRACKET, GOLDEN_TOL

Probability = Annotated[Decimal, Field(ge=0, le=1)]


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

class SearchModel(BaseModel):
    """Theta search of an estimation study."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["grid", "golden"] = "grid"
    grid: list[Any] | None = None
    bracket: tuple[float, float] = DEFAULT_BRACKET
    tol: float = Field(default=GOLDEN_TOL, gt=0)
    coarse_points: int = Field(default=COARSE_GRID_POINTS, ge=3)


class StudyModel(BaseModel):
    """Study block: replicated simulation and fit."""

    model_config = ConfigDict(extra="forbid")

    n_replicates: int = Field(ge=0)
    sample_size: int = Field(ge=0)
    seed: int
    true_theta: Any = None
    true_psi: Any = None
    search: SearchModel = SearchModel()


class ResponseEntry(BaseModel):
    """P(R_t = 1 | R_{t-1} = prev_r, key)."""

    model_config = ConfigDict(extra="forbid")

    prev_r: Literal[0, 1]
    key: str
    p: Probability


class ProcessTable(BaseModel):
    model_config = ConfigDict(extra="forbid")

    initial: dict[str, dict[str, Probability]]
    transition: dict[str, dict[str, dict[str, Probability]]]

    @model_validator(mode="after")
    def _same_theta_labels(self) -> "ProcessTable":
        if set(self.initial) != set(self.transition):
            raise ValueError("initial and transition list different theta labels")
        return self


class MechanismTable(BaseModel):
    model_config = ConfigDict(extra="forbid")

    depends_on: Literal["none", "observed", "past_x", "current_x"] = "none"
    r_kind: Literal["window", "visit"] = "window"
    label: str = "table"
    tables: dict[str, list[ResponseEntry]]


class TableModelFile(BaseModel):
    """Fully tabulated model: Markov X and a single-component response table."""

    model_config = ConfigDict(extra="forbid")

    label: str = "table"
    horizon: int = Field(ge=1)
    x_alphabet: list[int | str] = Field(min_length=1)
    process: ProcessTable
    mechanism: MechanismTable
    reference: tuple[str, str] | None = None
    absorbing_state: int | str | None = None
    is_counting: bool = False
    study: StudyModel | None = None


class ScenarioModelFile(BaseModel):
    """A catalog scenario with parameter overrides."""

    model_config = ConfigDict(extra="forbid")

    scenario: str
    params: dict[str, Any] = Field(default_factory=dict)
    study: StudyModel | None = None


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

class ToleranceEntry(BaseModel):
    value: float
    provenance: Literal["default", "cli"]


class Report(BaseModel):
    """Machine-readable result of one command."""

    tool_version: str
    command: str
    config: dict[str, Any]
    tolerances: dict[str, ToleranceEntry]
    certificates: list[dict[str, Any]] = Field(default_factory=list)
    battery: dict[str, Any] | None = None
    estimation: list[dict[str, Any]] = Field(default_factory=list)
    scenarios: list[dict[str, Any]] = Field(default_factory=list)
    examples: list[dict[str, Any]] = Field(default_factory=list)
    wall_clock_seconds: float = 0.0
