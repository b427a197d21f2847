"""
Monte Carlo estimation studies on catalog scenarios.

Simulates observations from a joint model, fits theta by maximizing either the
likelihood that ignores the response mechanism or the observed-data
likelihood at the true psi, and compares both with the population argmax
obtained by enumerating the expected log-likelihood under the true law.

Random streams: numpy PCG64 seeded through ``SeedSequence(seed)``; replicate
``k`` draws from the ``k``-th child of ``SeedSequence(seed).spawn(n)``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path as FilePath
from typing import Any, Callable, Mapping, Sequence

import numpy as np
import pandas as pd

from config import COARSE_GRID_POINTS, DEFAULT_BRACKET, GOLDEN_TOL, MASK_TEXT
from gcmp import MASK, JointModel, Observation, observe, observed_partition
from likelihood import all_observations, ignoring_lr, observed_lr
from pathspace import CoarseningError
from scenarios import Scenario

logger = logging.getLogger(__name__)

METHODS = ("ignoring", "correct")
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# Custom exceptions
# ---------------------------------------------------------------------------

class EstimationError(CoarseningError):
    """Raised when a fit cannot be carried out (empty data, non-finite likelihood)."""


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

def _render(value: Any) -> str:
    if value is MASK:
        return MASK_TEXT
    if isinstance(value, tuple):
        return "(" + ",".join(_render(v) for v in value) + ")"
    return str(value)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Simulated subjects, stored as support-path indices of ``model``."""

    model: JointModel
    indices: np.ndarray

    @property
    def size(self) -> int:
        return int(self.indices.size)

    def observations(self) -> list[Observation]:
        paths = self.model.space.paths
        return [observe(paths[int(i)], self.model.r_dim) for i in self.indices]

    def counts(self) -> dict[Observation, int]:
        """Number of subjects per distinct observation, first-seen order."""
        out: dict[Observation, int] = {}
        for obs in self.observations():
            out[obs] = out.get(obs, 0) + 1
        return out

    def to_frame(self) -> pd.DataFrame:
        """Wide table: one row per subject, r_t and x_obs_t columns, MASK as "NA"."""
        horizon = self.model.space.horizon
        rows = []
        for subject, obs in enumerate(self.observations(), start=1):
            row: dict[str, Any] = {"subject": subject}
            row.update({f"r_{t}": obs.r[t - 1] for t in range(1, horizon + 1)})
            row.update({f"x_obs_{t}": _render(obs.x_obs[t - 1]) for t in range(1, horizon + 1)})
            rows.append(row)
        columns = (
            ["subject"]
            + [f"r_{t}" for t in range(1, horizon + 1)]
            + [f"x_obs_{t}" for t in range(1, horizon + 1)]
        )
        return pd.DataFrame(rows, columns=columns)

    def to_csv(self, path: str | FilePath) -> None:
        self.to_frame().to_csv(path, index=False)


@dataclass(frozen=True)
class SearchSpec:
    """How theta is searched: over a finite grid, or golden section on a bracket."""

    kind: str = "grid"
    grid: tuple | None = None
    bracket: tuple[float, float] = DEFAULT_BRACKET
    tol: float = GOLDEN_TOL
    coarse_points: int = COARSE_GRID_POINTS

    def __post_init__(self) -> None:
        if self.kind not in ("grid", "golden"):
            raise ValueError(f"unknown search kind {self.kind!r}")
        lo, hi = self.bracket
        if not 0.0 < lo < hi < 1.0:
            raise ValueError(f"bracket {self.bracket!r} must lie inside (0, 1)")
        if self.coarse_points < 3:
            raise ValueError("coarse grid needs at least 3 points")

    def describe(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind == "grid":
            out["grid"] = None if self.grid is None else [repr(g) for g in self.grid]
        else:
            out.update(bracket=list(self.bracket), tol=self.tol, coarse_points=self.coarse_points)
        return out


@dataclass(frozen=True)
class EstimationStudy:
    """A replicated fit of both methods on one scenario.

    ``results`` holds one (theta_hat_ignoring, theta_hat_correct) pair per replicate.
    """

    scenario: Scenario
    true_theta: Any
    search: SearchSpec
    n_replicates: int
    sample_size: int
    seed: int
    true_psi: Any = None
    overrides: Mapping[str, Any] = field(default_factory=dict)
    results: tuple[tuple[Any, Any], ...] = ()


# ---------------------------------------------------------------------------
# Core computation
# ---------------------------------------------------------------------------

def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def replicate_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(child)) for child in np.random.SeedSequence(seed).spawn(n)]


def simulate(
    model: JointModel,
    theta: Any,
    psi: Any,
    sample_size: int,
    rng: np.random.Generator | int,
) -> Dataset:
    """i.i.d. draws of support paths from P_(theta, psi)."""
    if sample_size < 0:
        raise ValueError("sample size must be non-negative")
    if not isinstance(rng, np.random.Generator):
        rng = make_rng(int(rng))
    p = model.measure(theta, psi).p
    indices = rng.choice(model.space.size, size=sample_size, p=p)
    return Dataset(model, np.asarray(indices, dtype=np.int64))


class ObservationTable:
    """Atoms read by each fitting method, computed once per distinct observation.

    The ignoring method reads the X^r atom of the observation, the correct
    method its O atom; log-likelihoods are then mass ratios on those atoms.
    """

    def __init__(self, model: JointModel, psi: Any) -> None:
        self.model = model
        self.psi = psi
        self._atoms: dict[str, dict[Observation, np.ndarray]] = {m: {} for m in METHODS}
        self._observed = observed_partition(model)

    def atom(self, method: str, obs: Observation) -> np.ndarray:
        atoms = self._atoms[method]
        if obs not in atoms:
            theta0 = self.model.theta0
            if method == "ignoring":
                value = ignoring_lr(self.model, obs, theta0, theta0)
            else:
                value = observed_lr(
                    self.model, obs, (theta0, self.psi), (theta0, self.psi), observed=self._observed
                )
            atoms[obs] = np.asarray(value.atom, dtype=np.int64)
        return atoms[obs]

    def log_lr(self, method: str, theta: Any, weights: Mapping[Observation, float]) -> float:
        """sum_obs weight * log L^{theta/theta0} of the method's likelihood."""
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        model = self.model
        psi = model.psi0 if method == "ignoring" else self.psi
        num, den = model.measure(theta, psi), model.measure(model.theta0, psi)
        terms = []
        for obs, w in weights.items():
            atom = self.atom(method, obs)
            terms.append(w * math.log(num.mass(atom) / den.mass(atom)))
        total = math.fsum(terms)
        if not math.isfinite(total):
            raise EstimationError(f"non-finite log-likelihood at theta={theta!r} ({method})")
        return total


def _grid_argmax(objective: Callable[[Any], float], grid: Sequence[Any]) -> Any:
    """First maximizer over the grid sorted ascending."""
    best, best_value = None, -math.inf
    for theta in sorted(grid):
        value = objective(theta)
        if value > best_value:
            best, best_value = theta, value
    return best


def golden_section_max(objective: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    """Maximize a unimodal function on [lo, hi]; returns the final bracket midpoint."""
    c, d = hi - INV_PHI * (hi - lo), lo + INV_PHI * (hi - lo)
    fc, fd = objective(c), objective(d)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - INV_PHI * (hi - lo)
            fc = objective(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + INV_PHI * (hi - lo)
            fd = objective(d)
    return (lo + hi) / 2.0


def maximize(objective: Callable[[Any], float], search: SearchSpec, model: JointModel) -> Any:
    if search.kind == "grid":
        return _grid_argmax(objective, search.grid or model.theta_grid)
    lo, hi = search.bracket
    coarse = [float(v) for v in np.linspace(lo, hi, search.coarse_points)]
    best = coarse.index(_grid_argmax(objective, coarse))
    left, right = coarse[max(best - 1, 0)], coarse[min(best + 1, len(coarse) - 1)]
    return golden_section_max(objective, left, right, search.tol)


def fit_mle(
    dataset: Dataset,
    method: str,
    search: SearchSpec,
    psi: Any = None,
    table: ObservationTable | None = None,
) -> Any:
    """theta maximizing the dataset log-likelihood of ``method``.

    ``psi`` is the mechanism parameter the correct method conditions on; it
    defaults to the model reference. Grid ties go to the smallest theta.
    """
    if dataset.size == 0:
        raise EstimationError("cannot fit an empty dataset")
    model = dataset.model
    table = table or ObservationTable(model, model.psi0 if psi is None else psi)
    weights = {obs: float(n) for obs, n in dataset.counts().items()}
    return maximize(lambda theta: table.log_lr(method, theta, weights), search, model)


def observation_probabilities(model: JointModel, theta: Any, psi: Any) -> dict[Observation, float]:
    """Exact probability of every observation under P_(theta, psi)."""
    measure = model.measure(theta, psi)
    probs: dict[Observation, float] = {obs: 0.0 for obs in all_observations(model)}
    for i, path in enumerate(model.space.paths):
        probs[observe(path, model.r_dim)] += float(measure.p[i])
    return probs


def population_argmax(
    model: JointModel,
    true_theta: Any,
    true_psi: Any,
    method: str,
    search: SearchSpec,
    table: ObservationTable | None = None,
) -> Any:
    """Maximizer of E_(true_theta, true_psi)[log LR] for the method's likelihood."""
    table = table or ObservationTable(model, true_psi)
    weights = observation_probabilities(model, true_theta, true_psi)
    return maximize(lambda theta: table.log_lr(method, theta, weights), search, model)


def _fit_replicate(
    model: JointModel,
    table: ObservationTable,
    study: EstimationStudy,
    psi: Any,
    rng: np.random.Generator,
) -> tuple[Any, Any]:
    data = simulate(model, study.true_theta, psi, study.sample_size, rng)
    return tuple(fit_mle(data, method, study.search, psi, table) for method in METHODS)  # type: ignore[return-value]


def run_study(study: EstimationStudy, workers: int = 1) -> EstimationStudy:
    """Run every replicate; results come back in replicate order whatever ``workers``."""
    model = study.scenario.build(study.overrides)
    psi = model.psi0 if study.true_psi is None else study.true_psi
    if study.sample_size == 0 or study.n_replicates == 0:
        logger.info("Study %s: nothing to simulate, population section only", study.scenario.name)
        return replace(study, results=())
    table = ObservationTable(model, psi)
    for obs in all_observations(model):
        for method in METHODS:
            table.atom(method, obs)
    rngs = replicate_rngs(study.seed, study.n_replicates)
    logger.info(
        "Study %s: %d replicates of n=%d at theta=%r",
        study.scenario.name, study.n_replicates, study.sample_size, study.true_theta,
    )
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = tuple(pool.map(lambda rng: _fit_replicate(model, table, study, psi, rng), rngs))
    return replace(study, results=results)


def bias_report(study: EstimationStudy) -> dict[str, Any]:
    """Per-method sample summary of the fitted theta and the enumerated population argmax."""
    model = study.scenario.build(study.overrides)
    psi = model.psi0 if study.true_psi is None else study.true_psi
    table = ObservationTable(model, psi)
    numeric = isinstance(study.true_theta, (int, float))

    population = {}
    for method in METHODS:
        target = population_argmax(model, study.true_theta, psi, method, study.search, table)
        population[method] = {"argmax": target if numeric else repr(target)}
        if numeric:
            population[method]["bias"] = float(target) - float(study.true_theta)

    sample: dict[str, Any] = {}
    if study.results:
        frame = pd.DataFrame(list(study.results), columns=list(METHODS))
        for method in METHODS:
            if not numeric:
                sample[method] = {"values": frame[method].map(repr).value_counts().sort_index().to_dict()}
                continue
            values = frame[method].astype(float)
            n = int(values.size)
            sd = float(values.std(ddof=1)) if n > 1 else 0.0
            mean = math.fsum(sorted(values.tolist())) / n
            sample[method] = {
                "n": n,
                "mean": mean,
                "sd": sd,
                "se": sd / math.sqrt(n),
                "bias": mean - float(study.true_theta),
            }

    return {
        "scenario": study.scenario.name,
        "true_theta": study.true_theta if numeric else repr(study.true_theta),
        "true_psi": repr(psi),
        "sample_size": study.sample_size,
        "n_replicates": study.n_replicates,
        "seed": study.seed,
        "search": study.search.describe(),
        "population": population,
        "sample": sample,
    }
