"""
Catalog of observation schemes as ready-to-build coarsening models.

Each scenario pairs a process law with a response mechanism and declares the
certificate verdicts it is known to produce; ``verify_scenario`` re-derives
them from scratch.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Mapping, Sequence

import numpy as np
import pandas as pd

from certify import (
    Certificate,
    NotApplicableError,
    Verdict,
    Witness,
    check_car_abs,
    check_car_dyn,
    check_car_gcmp,
    check_car_loc,
    check_car_rel,
    check_dependence_class,
    check_factorization,
    check_fixed_visit_mar,
    check_ignorable,
    check_independent_censoring,
    check_predictable,
)
from config import DERIVED_TOL
from gcmp import (
    DependenceClass,
    JointModel,
    MechanismKernel,
    ProcessModel,
    VerticalCoarsener,
    build_joint,
    fixed_r_partition,
)
from likelihood import HazardSpec
from pathspace import CoarseningError, TimeGrid, generate_partition, rn_derivative

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Custom exceptions
# ---------------------------------------------------------------------------

class UnknownScenarioError(CoarseningError):
    """Raised when a scenario name is not in the catalog."""


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

Built = tuple[ProcessModel, MechanismKernel, tuple]


@dataclass(frozen=True)
class Scenario:
    """A named model builder with its declared certificate verdicts.

    ``expected_certificates`` maps a condition name to "holds" or "fails";
    for conditions checked per response path, "holds" means every support
    path holds and "fails" means at least one fails.
    """

    name: str
    builder: Callable[[Mapping[str, Any]], Built]
    defaults: Mapping[str, Any]
    expected_certificates: Mapping[str, str]
    provenance: str
    description: str = ""
    vertical: VerticalCoarsener | None = None
    true_theta: Any = None
    true_psi: Any = None
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def params(self, overrides: Mapping[str, Any] | None = None) -> dict[str, Any]:
        merged = {**self.defaults, **(overrides or {})}
        return {k: freeze(v) for k, v in merged.items()}

    def build(self, overrides: Mapping[str, Any] | None = None, cap: int | None = None) -> JointModel:
        params = self.params(overrides)
        process, mechanism, reference = self.builder(params)
        return build_joint(
            process,
            mechanism,
            reference,
            vertical=self.vertical,
            metadata={"scenario": self.name, "provenance": self.provenance, **self.metadata},
            cap=cap,
            label=self.name,
        )

    def truth(self, model: JointModel, overrides: Mapping[str, Any] | None = None) -> tuple:
        """True (theta, psi) for simulation studies; defaults to the reference pair."""
        params = self.params(overrides)
        theta = params.get("true_theta", self.true_theta)
        psi = params.get("true_psi", self.true_psi)
        return (model.theta0 if theta is None else theta, model.psi0 if psi is None else psi)


def freeze(value: Any) -> Any:
    """Lists become tuples, recursively, so parameters are hashable."""
    if isinstance(value, (list, tuple)):
        return tuple(freeze(v) for v in value)
    return value


# ---------------------------------------------------------------------------
# Process laws
# ---------------------------------------------------------------------------

def bernoulli_process(theta_grid: Sequence[float], horizon: int, label: str = "bernoulli") -> ProcessModel:
    """Independent Bernoulli(theta) values."""

    def kernel(theta: float, t: int, history: tuple) -> Mapping[int, float]:
        return {1: theta, 0: 1.0 - theta}

    return ProcessModel((0, 1), TimeGrid(horizon, label), kernel, tuple(theta_grid), label=label)


def constant_hazard(theta: float, t: int) -> float:
    return theta


def survival_process(
    theta_grid: Sequence[float],
    horizon: int,
    hazard: Callable[[Any, int], float] = constant_hazard,
    label: str = "survival",
) -> ProcessModel:
    """0-1 counting process with discrete hazard; 1 is absorbing."""

    def kernel(theta: Any, t: int, history: tuple) -> Mapping[int, float]:
        if history and history[-1] == 1:
            return {1: 1.0}
        h = hazard(theta, t)
        return {1: h, 0: 1.0 - h}

    return ProcessModel(
        (0, 1), TimeGrid(horizon, label), kernel, tuple(theta_grid),
        absorbing_state=1, is_counting=True, label=label,
    )


def survival_hazard_spec(horizon: int, hazard: Callable[[Any, int], float] = constant_hazard) -> HazardSpec:
    return HazardSpec(hazard, TimeGrid(horizon, "survival"))


def binary_markov_process(theta_grid: Sequence[float], horizon: int, label: str = "binary-markov") -> ProcessModel:
    """Binary chain started fair, staying put with probability theta."""

    def kernel(theta: float, t: int, history: tuple) -> Mapping[int, float]:
        if t == 1:
            return {0: 0.5, 1: 0.5}
        prev = history[-1]
        return {prev: theta, 1 - prev: 1.0 - theta}

    return ProcessModel((0, 1), TimeGrid(horizon, label), kernel, tuple(theta_grid), label=label)


def multi_survival_process(
    theta_grid: Sequence[float], horizon: int, rates: Sequence[float], label: str = "multi-survival"
) -> ProcessModel:
    """Independent 0-1 survival subjects; subject i has hazard theta * rates[i]."""
    n = len(rates)
    alphabet = tuple(itertools.product((0, 1), repeat=n))

    def kernel(theta: float, t: int, history: tuple) -> Mapping[tuple, float]:
        prev = history[-1] if history else (0,) * n
        row: dict[tuple, float] = {}
        for state in alphabet:
            prob = 1.0
            for i, (a, b) in enumerate(zip(prev, state)):
                if a == 1:
                    prob *= 1.0 if b == 1 else 0.0
                else:
                    h = theta * rates[i]
                    prob *= h if b == 1 else 1.0 - h
            if prob > 0.0:
                row[state] = prob
        return row

    return ProcessModel(alphabet, TimeGrid(horizon, label), kernel, tuple(theta_grid), label=label)


MARKER_STATES = ("low", "mid", "high")


def marker_process(theta_grid: Sequence[float], horizon: int, label: str = "marker") -> ProcessModel:
    """Three-state marker chain: stays with probability theta, else moves uniformly."""

    def kernel(theta: float, t: int, history: tuple) -> Mapping[str, float]:
        if t == 1:
            return {s: 1.0 / 3.0 for s in MARKER_STATES}
        prev = history[-1]
        return {s: theta if s == prev else (1.0 - theta) / 2.0 for s in MARKER_STATES}

    return ProcessModel(MARKER_STATES, TimeGrid(horizon, label), kernel, tuple(theta_grid), label=label)


def dropout_process(theta_grid: Sequence[float], horizon: int, label: str = "marker+event") -> ProcessModel:
    """X = (W, Y): W iid Bernoulli(theta), Y a 0-1 event with hazard 0.2 + 0.4 W."""
    alphabet = tuple(itertools.product((0, 1), repeat=2))

    def kernel(theta: float, t: int, history: tuple) -> Mapping[tuple, float]:
        y_prev = history[-1][1] if history else 0
        row: dict[tuple, float] = {}
        for w in (0, 1):
            p_w = theta if w == 1 else 1.0 - theta
            if y_prev == 1:
                row[(w, 1)] = p_w
                continue
            h = 0.2 + 0.4 * w
            row[(w, 1)] = p_w * h
            row[(w, 0)] = p_w * (1.0 - h)
        return row

    return ProcessModel(alphabet, TimeGrid(horizon, label), kernel, tuple(theta_grid), label=label)


def covariate_process(theta_grid: Sequence[tuple], horizon: int, label: str = "event+covariate") -> ProcessModel:
    """X = (W, Z): Z iid Bernoulli(gamma), W a 0-1 event with hazard theta_w (1 + Z / 2).

    theta = (theta_w, gamma).
    """
    alphabet = tuple(itertools.product((0, 1), repeat=2))

    def kernel(theta: tuple, t: int, history: tuple) -> Mapping[tuple, float]:
        theta_w, gamma = theta
        w_prev = history[-1][0] if history else 0
        row: dict[tuple, float] = {}
        for z in (0, 1):
            p_z = gamma if z == 1 else 1.0 - gamma
            if w_prev == 1:
                row[(1, z)] = p_z
                continue
            h = theta_w * (1.0 + 0.5 * z)
            row[(1, z)] = p_z * h
            row[(0, z)] = p_z * (1.0 - h)
        return row

    return ProcessModel(alphabet, TimeGrid(horizon, label), kernel, tuple(theta_grid), label=label)


# ---------------------------------------------------------------------------
# Scenario builders
# ---------------------------------------------------------------------------

def _grids(params: Mapping[str, Any]) -> tuple[tuple, Any, tuple, Any]:
    theta_grid, psi_grid = tuple(params["theta_grid"]), tuple(params["psi_grid"])
    theta0 = params.get("theta0", theta_grid[-1])
    psi0 = params.get("psi0", psi_grid[0])
    return theta_grid, theta0, psi_grid, psi0


def _m1_ignorable(params: Mapping[str, Any]) -> Built:
    theta_grid, theta0, psi_grid, psi0 = _grids(params)

    def kernel(psi: tuple, t: int, x_path: tuple, r_history: tuple) -> Mapping[int, float]:
        if t == 1:
            return {1: 1.0}
        p = psi[0] if x_path[0] == 1 else psi[1]
        return {1: p, 0: 1.0 - p}

    mech = MechanismKernel(1, kernel, psi_grid, DependenceClass.PAST_OBSERVED, "visit", "m1-past")
    return bernoulli_process(theta_grid, 2), mech, (theta0, psi0)


def _m1_anticipating(params: Mapping[str, Any]) -> Built:
    theta_grid, theta0, psi_grid, psi0 = _grids(params)

    def kernel(psi: tuple, t: int, x_path: tuple, r_history: tuple) -> Mapping[int, float]:
        if t == 1:
            return {1: 1.0}
        p = psi[0] if x_path[1] == 1 else psi[1]
        return {1: p, 0: 1.0 - p}

    mech = MechanismKernel(1, kernel, psi_grid, DependenceClass.ANTICIPATING, "visit", "m1-anticipating")
    return bernoulli_process(theta_grid, 2), mech, (theta0, psi0)


def _full_observation(params: Mapping[str, Any]) -> Built:
    theta_grid, theta0, psi_grid, psi0 = _grids(params)

    def kernel(psi: Any, t: int, x_path: tuple, r_history: tuple) -> Mapping[int, float]:
        return {1: 1.0}

    mech = MechanismKernel(1, kernel, psi_grid, DependenceClass.PAST_OBSERVED, "window", "always")
    return bernoulli_process(theta_grid, params["horizon"]), mech, (theta0, psi0)


def _right_censor(depends_on_current: bool) -> Callable[[Mapping[str, Any]], Built]:
    def build(params: Mapping[str, Any]) -> Built:
        theta_grid, theta0, psi_grid, psi0 = _grids(params)

        def kernel(psi: tuple, t: int, x_path: tuple, r_history: tuple) -> Mapping[int, float]:
            if r_history and r_history[-1] == 0:
                return {0: 1.0}
            if depends_on_current:
                h = psi[0] if x_path[t - 1] == 1 else psi[1]
            else:
                h = psi[t - 1]
            return {0: h, 1: 1.0 - h}

        dependence = DependenceClass.ANTICIPATING if depends_on_current else DependenceClass.PAST_OBSERVED
        label = "censor-on-current-x" if depends_on_current else "censor-independent"
        mech = MechanismKernel(1, kernel, psi_grid, dependence, "window", label)
        return survival_process(theta_grid, params["horizon"]), mech, (theta0, psi0)

    return build


def _left_censor(params: Mapping[str, Any]) -> Built:
    theta_grid, theta0, psi_grid, psi0 = _grids(params)

    def kernel(psi: tuple, t: int, x_path: tuple, r_history: tuple) -> Mapping[int, float]:
        if r_history and r_history[-1] == 1:
            return {1: 1.0}
        s = psi[t - 1]
        return {1: s, 0: 1.0 - s}

    mech = MechanismKernel(1, kernel, psi_grid, DependenceClass.PAST_OBSERVED, "window", "late-entry")
    return survival_process(theta_grid, params["horizon"]), mech, (theta0, psi0)


def _interval_visits(informative: bool) -> Callable[[Mapping[str, Any]], Built]:
    def build(params: Mapping[str, Any]) -> Built:
        theta_grid, theta0, psi_grid, psi0 = _grids(params)
        first, second = params["visits"]

        def kernel(psi: tuple, t: int, x_path: tuple, r_history: tuple) -> Mapping[int, float]:
            if t == first:
                p = psi[0]
            elif t == second:
                if informative:
                    p = psi[1] if x_path[t - 2] == 1 else psi[2]
                elif r_history[first - 1] == 1:
                    p = psi[1] if x_path[first - 1] == 1 else psi[2]
                else:
                    p = psi[3]
            else:
                return {0: 1.0}
            return {1: p, 0: 1.0 - p}

        dependence = DependenceClass.PAST_X if informative else DependenceClass.PAST_OBSERVED
        mech = MechanismKernel(1, kernel, psi_grid, dependence, "visit", "fixed-visits")
        return survival_process(theta_grid, params["horizon"]), mech, (theta0, psi0)

    return build


def _observation_windows(params: Mapping[str, Any]) -> Built:
    theta_grid, theta0, psi_grid, psi0 = _grids(params)

    def kernel(psi: tuple, t: int, x_path: tuple, r_history: tuple) -> Mapping[int, float]:
        prev = r_history[-1] if r_history else 1
        p = psi[0] if prev == 1 else psi[1]
        return {1: p, 0: 1.0 - p}

    mech = MechanismKernel(1, kernel, psi_grid, DependenceClass.PAST_OBSERVED, "window", "on-off")
    return bernoulli_process(theta_grid, params["horizon"]), mech, (theta0, psi0)


def _mixed_monitoring(params: Mapping[str, Any]) -> Built:
    theta_grid, theta0, psi_grid, psi0 = _grids(params)

    def kernel(psi: tuple, t: int, x_path: tuple, r_history: tuple) -> Mapping[int, float]:
        if t == 1:
            return {1: 1.0}
        if all(r_history):
            # still in hospital: discharge depends on the last (observed) value
            p_stay = 1.0 - (psi[0] if x_path[t - 2] == 1 else psi[1])
            return {1: p_stay, 0: 1.0 - p_stay}
        return {1: psi[2], 0: 1.0 - psi[2]}

    mech = MechanismKernel(1, kernel, psi_grid, DependenceClass.PAST_OBSERVED, "window", "hospital-then-visits")
    return binary_markov_process(theta_grid, params["horizon"]), mech, (theta0, psi0)


def _type2(params: Mapping[str, Any]) -> Built:
    """Type II censoring with an independent per-step withdrawal probability psi."""
    theta_grid, theta0, psi_grid, psi0 = _grids(params)
    d = int(params["d"])

    def kernel(psi: float, t: int, x_path: tuple, r_history: tuple) -> Mapping[int, float]:
        if t == 1:
            return {1: 1.0}
        if r_history[-1] == 0 or sum(x_path[t - 2]) >= d:
            return {0: 1.0}
        return {1: 1.0 - psi, 0: psi} if psi > 0.0 else {1: 1.0}

    mech = MechanismKernel(1, kernel, psi_grid, DependenceClass.PAST_OBSERVED, "window", f"type2(d={d})")
    process = multi_survival_process(theta_grid, params["horizon"], (1.0,) * int(params["subjects"]))
    return process, mech, (theta0, psi0)


def harmonic_stop(j: int) -> float:
    return (j - 1) / j


def half_harmonic_stop(j: int) -> float:
    return (j - 1) / (2 * j)


STOP_RULES: dict[str, Callable[[int], float]] = {
    "harmonic": harmonic_stop,
    "half-harmonic": half_harmonic_stop,
}


def _randomized_type2(params: Mapping[str, Any]) -> Built:
    theta_grid, theta0, psi_grid, psi0 = _grids(params)

    def kernel(psi: str, t: int, x_path: tuple, r_history: tuple) -> Mapping[int, float]:
        if t == 1:
            return {1: 1.0}
        if r_history[-1] == 0:
            return {0: 1.0}
        before = sum(x_path[t - 3]) if t > 2 else 0
        j = sum(x_path[t - 2])
        if j == before:
            return {1: 1.0}
        stop = STOP_RULES[psi](j)
        return {0: stop, 1: 1.0 - stop} if stop > 0.0 else {1: 1.0}

    mech = MechanismKernel(1, kernel, psi_grid, DependenceClass.PAST_OBSERVED, "window", "randomized-type2")
    process = multi_survival_process(theta_grid, params["horizon"], (1.0,) * int(params["subjects"]))
    return process, mech, (theta0, psi0)


def interim_predictions(x_first: tuple, z: Sequence[float]) -> tuple[float, ...]:
    """Predicted event probabilities from the smoothed interim estimate (events + 1/2) / (sum z + 1)."""
    theta_hat = (sum(x_first) + 0.5) / (sum(z) + 1.0)
    return tuple(theta_hat * z_i for z_i in z)


def _adaptive_stopping(params: Mapping[str, Any]) -> Built:
    """Subjects predicted below the threshold c are kept on follow-up with probability q; psi = (c, q)."""
    theta_grid, theta0, psi_grid, psi0 = _grids(params)
    z = tuple(params["z"])
    interim = int(params["interim"])
    full = 2 ** len(z) - 1

    def kernel(psi: tuple, t: int, x_path: tuple, r_history: tuple) -> Mapping[int, float]:
        if t <= interim:
            return {full: 1.0}
        if t > interim + 1:
            return {r_history[-1]: 1.0}
        c, q = psi
        at_interim = x_path[interim - 1]
        predicted = interim_predictions(at_interim, z)
        kept = sum(1 << i for i, p_i in enumerate(predicted) if at_interim[i] == 1 or p_i >= c)
        optional = [1 << i for i in range(len(z)) if not kept & (1 << i)]
        row: dict[int, float] = {}
        for chosen in itertools.product((0, 1), repeat=len(optional)):
            prob = 1.0
            code = kept
            for bit, on in zip(optional, chosen):
                prob *= q if on else 1.0 - q
                code |= bit if on else 0
            if prob > 0.0:
                row[code] = row.get(code, 0.0) + prob
        return row

    mech = MechanismKernel(len(z), kernel, psi_grid, DependenceClass.PAST_OBSERVED, "window", "interim-threshold")
    process = multi_survival_process(theta_grid, params["horizon"], z, label="covariate-hazard")
    return process, mech, (theta0, psi0)


def _marker_schedule(delays: Mapping[Hashable, int], clamp: Callable[[Any], Hashable] | None = None) -> Callable[[Mapping[str, Any]], Built]:
    def build(params: Mapping[str, Any]) -> Built:
        theta_grid, theta0, psi_grid, psi0 = _grids(params)

        def kernel(psi: float, t: int, x_path: tuple, r_history: tuple) -> Mapping[int, float]:
            if t == 1:
                return {1: 1.0}
            last = max(s for s, r_s in enumerate(r_history, start=1) if r_s == 1)
            reported = x_path[last - 1] if clamp is None else clamp(x_path[last - 1])
            if t < last + delays[reported]:
                return {0: 1.0}
            return {1: psi, 0: 1.0 - psi}

        mech = MechanismKernel(1, kernel, psi_grid, DependenceClass.PAST_OBSERVED, "visit", "marker-schedule")
        return marker_process(theta_grid, params["horizon"]), mech, (theta0, psi0)

    return build


def detection_clamp(value: Hashable) -> Hashable:
    return "<=mid" if value in ("low", "mid") else value


DETECTION_LIMIT = VerticalCoarsener(detection_clamp, "detection-limit")


def _joint_dropout(latent: bool) -> Callable[[Mapping[str, Any]], Built]:
    def build(params: Mapping[str, Any]) -> Built:
        theta_grid, theta0, psi_grid, psi0 = _grids(params)

        def kernel(psi: tuple, t: int, x_path: tuple, r_history: tuple) -> Mapping[int, float]:
            if r_history and r_history[-1] == 0:
                return {0: 1.0}
            if latent:
                y = x_path[t - 1][1]
            else:
                y = x_path[t - 2][1] if t > 1 else 0
            h = psi[0] if y == 1 else psi[1]
            return {0: h, 1: 1.0 - h}

        dependence = DependenceClass.ANTICIPATING if latent else DependenceClass.PAST_OBSERVED
        mech = MechanismKernel(1, kernel, psi_grid, dependence, "window", "dropout-latent" if latent else "dropout-observed")
        return dropout_process(theta_grid, params["horizon"]), mech, (theta0, psi0)

    return build


def _right_censor_covariate(params: Mapping[str, Any]) -> Built:
    theta_grid, theta0, psi_grid, psi0 = _grids(params)

    def kernel(psi: tuple, t: int, x_path: tuple, r_history: tuple) -> Mapping[int, float]:
        # bit 0: event W, bit 1: covariate Z (always seen)
        if r_history and (r_history[-1] & 1) == 0:
            return {0b10: 1.0}
        z_prev = x_path[t - 2][1] if t > 1 else 0
        h = psi[z_prev]
        return {0b10: h, 0b11: 1.0 - h}

    mech = MechanismKernel(2, kernel, psi_grid, DependenceClass.PAST_OBSERVED, "window", "censor-on-covariate")
    return covariate_process(theta_grid, params["horizon"]), mech, (theta0, psi0)


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

_ALL_HOLD = {
    "CAR(DYN)": "holds",
    "CAR(GCMP)": "holds",
    "CAR(REL)": "holds",
    "CAR(GCMP)-loc": "holds",
    "ignorable": "holds",
    "factorization": "holds",
    "dependence class": "holds",
}


def _hold(**extra: str) -> dict[str, str]:
    return {**_ALL_HOLD, **{k.replace("_", " "): v for k, v in extra.items()}}


_SCENARIOS: tuple[Scenario, ...] = (
    Scenario(
        "m1_ignorable", _m1_ignorable,
        {"theta_grid": [0.3, 0.5], "theta0": 0.5, "psi_grid": [[0.5, 0.5], [0.7, 0.4]], "psi0": [0.5, 0.5]},
        {**_hold(), "CAR(ABS)": "holds"},
        "canonical two-step model, response at step 2 driven by the observed X_1",
        true_theta=0.3,
    ),
    Scenario(
        "m1_anticipating", _m1_anticipating,
        {"theta_grid": [0.3, 0.5], "theta0": 0.5, "psi_grid": [[0.9, 0.5], [0.7, 0.5]], "psi0": [0.9, 0.5]},
        {
            "CAR(DYN)": "fails", "CAR(GCMP)": "fails", "CAR(REL)": "fails", "CAR(ABS)": "fails",
            "CAR(GCMP)-loc": "fails", "ignorable": "fails", "factorization": "precondition-failed", "dependence class": "holds",
        },
        "canonical two-step model, response at step 2 driven by the unobserved X_2",
        true_theta=0.3,
    ),
    Scenario(
        "full_observation", _full_observation,
        {"theta_grid": [0.3, 0.5], "theta0": 0.5, "psi_grid": ["always"], "horizon": 2},
        {**_hold(), "CAR(ABS)": "holds", "predictable": "holds"},
        "complete data: R identically one",
        true_theta=0.3,
    ),
    Scenario(
        "right_censor_independent", _right_censor(False),
        {
            "theta_grid": [0.3, 0.5], "theta0": 0.5, "horizon": 4,
            "psi_grid": [[0.25, 1 / 3, 0.5, 1.0], [0.5, 0.5, 0.5, 1.0]],
        },
        {**_hold(), "CAR(ABS)": "holds", "independent censoring": "holds"},
        "right-censored survival, censoring time independent of the event",
        true_theta=0.3,
    ),
    Scenario(
        "right_censor_informative", _right_censor(True),
        {"theta_grid": [0.3, 0.5], "theta0": 0.5, "horizon": 4, "psi_grid": [[0.4, 0.2], [0.2, 0.2]]},
        {
            "CAR(DYN)": "fails", "CAR(GCMP)": "fails", "CAR(REL)": "fails", "CAR(ABS)": "fails",
            "CAR(GCMP)-loc": "fails", "ignorable": "fails", "independent censoring": "fails",
            "dependence class": "holds",
        },
        "right-censored survival, censoring hazard driven by the current unobserved state",
        true_theta=0.3,
    ),
    Scenario(
        "left_censor", _left_censor,
        {
            "theta_grid": [0.3, 0.5], "theta0": 0.5, "horizon": 4,
            "psi_grid": [[0.3, 0.5, 0.5, 0.5], [0.6, 0.4, 0.5, 0.5]],
        },
        {**_hold(), "CAR(ABS)": "holds"},
        "left-censored survival: monitoring starts at an independent entry time",
        true_theta=0.3,
    ),
    Scenario(
        "interval_censor_fixed_visits", _interval_visits(False),
        {
            "theta_grid": [0.3, 0.5], "theta0": 0.5, "horizon": 4, "visits": [2, 4],
            "psi_grid": [[0.8, 0.5, 0.9, 0.7], [0.6, 0.3, 0.8, 0.5]],
        },
        {**_hold(), "CAR(ABS)": "holds", "fixed-visit MAR": "holds"},
        "interval censoring at scheduled visits; attendance depends on the last observed value",
        true_theta=0.3,
    ),
    Scenario(
        "interval_censor_informative", _interval_visits(True),
        {
            "theta_grid": [0.3, 0.5], "theta0": 0.5, "horizon": 4, "visits": [2, 4],
            "psi_grid": [[0.8, 0.5, 0.9], [0.8, 0.3, 0.9]],
        },
        {"CAR(DYN)": "fails", "CAR(GCMP)": "fails", "CAR(REL)": "fails", "ignorable": "fails", "fixed-visit MAR": "fails", "dependence class": "holds"},
        "interval censoring at scheduled visits; attendance depends on the unobserved X_3",
        true_theta=0.3,
    ),
    Scenario(
        "observation_windows", _observation_windows,
        {"theta_grid": [0.3, 0.5], "theta0": 0.5, "horizon": 3, "psi_grid": [[0.8, 0.3], [0.6, 0.5]]},
        {**_hold(), "CAR(ABS)": "holds"},
        "on/off observation windows driven by a Markov switch independent of X",
        true_theta=0.3,
    ),
    Scenario(
        "mixed_monitoring", _mixed_monitoring,
        {"theta_grid": [0.6, 0.8], "theta0": 0.8, "horizon": 4, "psi_grid": [[0.3, 0.6, 0.5], [0.5, 0.2, 0.7]]},
        _hold(),
        "continuous monitoring in hospital followed by discrete-time outpatient visits",
        true_theta=0.6,
        metadata={"marks": "window jumps while hospitalised are continuous-part jumps; later ones are visits"},
    ),
    Scenario(
        "type2", _type2,
        {"theta_grid": [0.3, 0.5], "theta0": 0.5, "horizon": 3, "psi_grid": [0.0], "d": 1, "subjects": 2},
        {**_hold(), "predictable": "holds"},
        "Type II censoring: observation stops once d events have occurred",
        true_theta=0.3,
    ),
    Scenario(
        "type2_withdrawal", _type2,
        {"theta_grid": [0.3, 0.5], "theta0": 0.5, "horizon": 3, "psi_grid": [0.1, 0.25], "d": 1, "subjects": 2},
        _hold(),
        "Type II censoring with an independent per-step withdrawal probability psi",
        true_theta=0.3,
    ),
    Scenario(
        "randomized_type2", _randomized_type2,
        {"theta_grid": [0.3, 0.5], "theta0": 0.5, "horizon": 3, "psi_grid": ["harmonic", "half-harmonic"], "subjects": 2},
        _hold(),
        "randomized Type II censoring: stop just after the j-th event with probability (j-1)/j",
        true_theta=0.3,
    ),
    Scenario(
        "adaptive_stopping_threshold", _adaptive_stopping,
        {
            "theta_grid": [0.2, 0.3], "theta0": 0.3, "horizon": 3, "z": [1.0, 1.5], "interim": 1,
            "psi_grid": [[0.3, 0.0]],
        },
        {**_hold(), "predictable": "holds"},
        "interim analysis: subjects with predicted event probability below c stop being followed",
        true_theta=0.2,
    ),
    Scenario(
        "adaptive_stopping_follow_up", _adaptive_stopping,
        {
            "theta_grid": [0.2, 0.3], "theta0": 0.3, "horizon": 3, "z": [1.0, 1.5], "interim": 1,
            "psi_grid": [[0.3, 0.2], [0.3, 0.5]],
        },
        _hold(),
        "interim analysis: subjects predicted below c stay on follow-up with probability q",
        true_theta=0.2,
    ),
    Scenario(
        "marker_visit_schedule", _marker_schedule({"high": 3, "mid": 2, "low": 1}),
        {"theta_grid": [0.6, 0.8], "theta0": 0.8, "horizon": 4, "psi_grid": [0.8, 0.6]},
        _hold(),
        "marker visits: next visit after 3/2/1 steps for high/mid/low, missed visits retried",
        true_theta=0.6,
    ),
    Scenario(
        "detection_limit", _marker_schedule({"high": 2, "<=mid": 1}, detection_clamp),
        {"theta_grid": [0.6, 0.8], "theta0": 0.8, "horizon": 4, "psi_grid": [0.8, 0.6]},
        {**_hold(), "ignorable[detection-limit]": "holds"},
        "marker reported through a detection limit merging low and mid; schedule reads the reported value",
        vertical=DETECTION_LIMIT,
        true_theta=0.6,
    ),
    Scenario(
        "joint_model_dropout_observed", _joint_dropout(False),
        {"theta_grid": [0.3, 0.5], "theta0": 0.5, "horizon": 3, "psi_grid": [[0.6, 0.2], [0.3, 0.2]]},
        _hold(),
        "marker with drop-out driven by the last observed state of a companion event",
        true_theta=0.3,
    ),
    Scenario(
        "joint_model_dropout_latent", _joint_dropout(True),
        {"theta_grid": [0.3, 0.5], "theta0": 0.5, "horizon": 3, "psi_grid": [[0.6, 0.2], [0.3, 0.2]]},
        {"CAR(DYN)": "fails", "CAR(GCMP)": "fails", "CAR(REL)": "fails", "ignorable": "fails", "dependence class": "holds"},
        "marker with drop-out driven by the current, unobserved state of a companion event",
        true_theta=0.3,
    ),
    Scenario(
        "right_censor_covariate", _right_censor_covariate,
        {
            "theta_grid": [[0.2, 0.4], [0.2, 0.5], [0.3, 0.4], [0.3, 0.5]], "theta0": [0.3, 0.5],
            "horizon": 3, "psi_grid": [[0.2, 0.4], [0.3, 0.3]],
        },
        _hold(),
        "right-censored event with an always-observed covariate driving the censoring",
        true_theta=(0.2, 0.4),
    ),
)


def catalog() -> list[Scenario]:
    return list(_SCENARIOS)


def get_scenario(name: str) -> Scenario:
    for scenario in _SCENARIOS:
        if scenario.name == name:
            return scenario
    raise UnknownScenarioError(f"unknown scenario {name!r}")


# ---------------------------------------------------------------------------
# Scenario-level checks
# ---------------------------------------------------------------------------

def _combined(certs: list[Certificate]) -> Certificate:
    """One verdict for a per-r family: the first failure, else the first certificate."""
    for cert in certs:
        if cert.verdict is Verdict.FAILS:
            return cert
    return certs[0]


def certify_all(model: JointModel, vertical: VerticalCoarsener | None = None, tol: float = DERIVED_TOL) -> dict[str, Certificate]:
    """Every certificate for one model, per-r families reduced to one verdict."""
    certs: dict[str, Certificate] = {
        "CAR(DYN)": check_car_dyn(model, tol),
        "CAR(GCMP)": check_car_gcmp(model, tol),
        "CAR(REL)": check_car_rel(model, tol),
        "CAR(ABS)": check_car_abs(model, tol),
        "factorization": check_factorization(model, tol),
        "predictable": check_predictable(model, tol),
        "fixed-visit MAR": check_fixed_visit_mar(model, tol),
        "dependence class": check_dependence_class(model, tol),
    }
    r_paths = model.r_paths()
    certs["CAR(GCMP)-loc"] = _combined([check_car_loc(model, r, tol) for r in r_paths])
    certs["ignorable"] = _combined([check_ignorable(model, r, tol=tol) for r in r_paths])
    if vertical is not None:
        certs[f"ignorable[{vertical.label}]"] = _combined(
            [check_ignorable(model, r, vertical=vertical, tol=tol) for r in r_paths]
        )
    try:
        certs["independent censoring"] = check_independent_censoring(model, tol)
    except NotApplicableError:
        pass
    return certs


def verify_scenario(scenario: Scenario, model: JointModel | None = None) -> dict[str, tuple[str, str]]:
    """Declared verdicts that a fresh certification contradicts: name -> (expected, actual)."""
    model = model or scenario.build()
    certs = certify_all(model, scenario.vertical)
    mismatches = {}
    for name, expected in scenario.expected_certificates.items():
        actual = certs[name].verdict.value if name in certs else Verdict.NOT_APPLICABLE.value
        if actual != expected:
            mismatches[name] = (expected, actual)
    if mismatches:
        logger.warning("Scenario %s disagrees with its declared verdicts: %s", scenario.name, mismatches)
    return mismatches


def vertical_preservation(model: JointModel, vertical: VerticalCoarsener, tol: float = DERIVED_TOL) -> list[tuple]:
    """Response paths on which ignorability holds for O but not for the coarsened O'."""
    broken = []
    for r in model.r_paths():
        if check_ignorable(model, r, tol=tol).holds and not check_ignorable(model, r, vertical=vertical, tol=tol).holds:
            broken.append(r)
    return broken


def _component_partition(model: JointModel, r: tuple, component: int) -> Any:
    """sigma(X_{component, t} : R_{component, t} = 1) for a fixed multivariate r."""
    return generate_partition(
        model.space,
        lambda p: tuple(x_t[component] if (r_t >> component) & 1 else None for x_t, r_t in zip(p.x, r)),
        f"component{component}^{r}",
    )


def expected_log_lr(
    model: JointModel,
    truth: tuple,
    log_lr: Callable[[Any], np.ndarray],
) -> pd.Series:
    """E_truth[log LR(theta)] for every theta on the grid, indexed by theta."""
    weights = model.measure(*truth).p
    thetas = list(model.theta_grid)
    return pd.Series(
        [math.fsum(weights * log_lr(theta)) for theta in thetas],
        index=pd.Index(thetas, tupleize_cols=False),
        dtype=float,
    )


def ignoring_log_lr(model: JointModel, theta: Any, field_of: Callable[[tuple], Any]) -> np.ndarray:
    """Per-path log L_{X^r} evaluated on each path's own response path."""
    out = np.zeros(model.space.size)
    psi0 = model.psi0
    num, den = model.measure(theta, psi0), model.measure(model.theta0, psi0)
    for r in model.r_paths():
        on_r = np.array([i for i, p in enumerate(model.space.paths) if p.r == r])
        out[on_r] = np.log(rn_derivative(num, den, field_of(r)).v[on_r])
    return out


def check_covariate_sufficiency(
    model: JointModel,
    event: int = 0,
    covariate: int = 1,
    truth: tuple | None = None,
    tol: float = DERIVED_TOL,
) -> Certificate:
    """The event-parameter argmax of E log L_{W^r|Z^r} equals that of E log L_{X^r}.

    theta is a tuple whose component ``event`` drives the event process W.
    """
    truth = truth or model.reference
    full = expected_log_lr(model, truth, lambda th: ignoring_log_lr(model, th, lambda r: fixed_r_partition(model, r)))
    covariate_only = expected_log_lr(
        model, truth, lambda th: ignoring_log_lr(model, th, lambda r: _component_partition(model, r, covariate))
    )
    conditional = full - covariate_only
    full_best = full.idxmax()[event]
    best = conditional.max()
    conditional_best = {th[event] for th, v in conditional.items() if v >= best - tol * max(1.0, abs(best))}
    detail = {"full_argmax": repr(full.idxmax()), "conditional_argmax": sorted(conditional_best)}
    if full_best in conditional_best:
        return Certificate("covariate sufficiency", Verdict.HOLDS, tol, None, "", detail)
    witness = Witness((truth,), None, (), (), (float(full.max()), float(best)), note=f"{full_best!r} not in {sorted(conditional_best)!r}")
    return Certificate("covariate sufficiency", Verdict.FAILS, tol, witness, "", detail)
