"""
Likelihood ratios on a joint model.

Full, marginal, conditional, observed-data and mechanism-ignoring likelihood
ratios, the discrete product-integral likelihood of a counting process, and
the hazard form of the survival likelihood.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from config import LOG_DOMAIN_THRESHOLD, SUM_TOL
from gcmp import (
    JointModel,
    Observation,
    ParameterError,
    VerticalCoarsener,
    fixed_r_partition,
    mask_path,
    observe,
    observed_partition,
)
from pathspace import (
    CoarseningError,
    Partition,
    PathFunction,
    TimeGrid,
    cond_expect,
    join,
    rn_derivative,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Custom exceptions
# ---------------------------------------------------------------------------

class ObservationOffSupportError(CoarseningError):
    """Raised when an observation has probability zero under the model."""


class InvalidCompensatorIncrementError(CoarseningError):
    """Raised when a compensator increment is outside [0, 1], or is 0 or 1 on one side only."""


class SimultaneousJumpsError(CoarseningError):
    """Raised when more than one component jumps in a single step."""


class InvalidTimesError(CoarseningError):
    """Raised when event and censoring times are out of order or off the grid."""


class NumericalConsistencyError(CoarseningError):
    """Raised when two exact computations of the same quantity disagree."""


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LRQuery:
    """L^{num/den} on the sigma-field ``field``."""

    model: JointModel
    num_params: tuple
    den_params: tuple
    field: Partition

    def __post_init__(self) -> None:
        for pair in (self.num_params, self.den_params):
            if pair not in self.model.measures:
                raise ParameterError(f"parameter pair {pair!r} is not in the model table")


@dataclass(frozen=True)
class LRValue:
    """A likelihood ratio together with the path indices of the atom it was read on."""

    value: float
    atom: tuple[int, ...]

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class HazardSpec:
    """Discrete hazard lambda_theta(t) of a single event on a grid."""

    hazard: Callable[[Any, int], float]
    grid: TimeGrid

    def at(self, theta: Any, t: int) -> float:
        value = float(self.hazard(theta, t))
        if not 0.0 < value < 1.0:
            raise InvalidCompensatorIncrementError(
                f"invalid compensator increment: hazard {value!r} at t={t} for theta={theta!r}"
            )
        return value


# ---------------------------------------------------------------------------
# Core computation
# ---------------------------------------------------------------------------

def product(factors: Sequence[float]) -> float:
    """Product of positive factors, summed in log domain past the threshold."""
    if len(factors) > LOG_DOMAIN_THRESHOLD:
        return math.exp(math.fsum(math.log(f) for f in factors))
    return math.prod(factors)


def lr(query: LRQuery) -> PathFunction:
    model = query.model
    return rn_derivative(
        model.measure(*query.num_params), model.measure(*query.den_params), query.field
    )


def conditional_lr(
    model: JointModel, target: Partition, given: Partition, num: tuple, den: tuple
) -> PathFunction:
    """L_{target | given} = L_{target v given} / L_{given}."""
    joint = rn_derivative(model.measure(*num), model.measure(*den), join(target, given))
    marginal = rn_derivative(model.measure(*num), model.measure(*den), given)
    return joint / marginal


def observation_atom(model: JointModel, obs: Observation) -> np.ndarray:
    """Indices of the support paths producing ``obs``."""
    d = model.r_dim
    atom = np.array(
        [i for i, p in enumerate(model.space.paths) if p.r == obs.r and mask_path(p.x, p.r, d) == obs.x_obs],
        dtype=np.int64,
    )
    if atom.size == 0:
        raise ObservationOffSupportError(f"observation off support: {obs}")
    return atom


def full_lr(model: JointModel, num: tuple, den: tuple) -> PathFunction:
    """L_F per path: P_num(path) / P_den(path)."""
    num_m, den_m = model.measure(*num), model.measure(*den)
    return PathFunction(model.space, num_m.p / den_m.p)


def observed_lr(
    model: JointModel,
    obs: Observation,
    num: tuple,
    den: tuple,
    observed: Partition | None = None,
) -> LRValue:
    """L_O on the atom of ``obs``, cross-checked against E_den[L_F | O].

    ``observed`` may be passed to reuse a precomputed observed partition.
    """
    atom = observation_atom(model, obs)
    num_m, den_m = model.measure(*num), model.measure(*den)
    den_mass = den_m.mass(atom)
    if den_mass <= 0.0:
        raise ObservationOffSupportError(f"observation off support under {den!r}: {obs}")
    ratio = num_m.mass(atom) / den_mass

    if observed is None:
        observed = observed_partition(model)
    projected = cond_expect(full_lr(model, num, den), observed, den_m)[int(atom[0])]
    if abs(projected - ratio) > SUM_TOL * max(1.0, abs(ratio)):
        raise NumericalConsistencyError(
            f"observed likelihood {ratio!r} disagrees with E[L_F|O] = {projected!r}"
        )
    return LRValue(ratio, tuple(int(i) for i in atom))


def ignoring_lr(
    model: JointModel,
    obs: Observation,
    theta: Any,
    theta0: Any,
    vertical: VerticalCoarsener | None = None,
) -> LRValue:
    """L_{X^r}: the likelihood ratio computed as if the response path were fixed.

    Evaluated with the mechanism held at the reference psi0; the X-marginal does
    not involve psi, so neither does the result.
    """
    atom = observation_atom(model, obs)
    psi0 = model.psi0
    field = fixed_r_partition(model, obs.r, vertical)
    value = rn_derivative(model.measure(theta, psi0), model.measure(theta0, psi0), field)
    return LRValue(value[int(atom[0])], tuple(int(i) for i in field.atom_of(int(atom[0]))))


def _check_increment(value: float, other: float, t: int) -> None:
    if not 0.0 <= value <= 1.0:
        raise InvalidCompensatorIncrementError(
            f"invalid compensator increment {value!r} at t={t}"
        )
    if value in (0.0, 1.0) and value != other:
        raise InvalidCompensatorIncrementError(
            f"invalid compensator increment {value!r} at t={t}: boundary value not shared"
        )


def jacod_phi(lambda_num: Any, lambda_den: Any, n: Any) -> float:
    """Discrete product-integral likelihood ratio of a marked counting path.

    ``lambda_num`` and ``lambda_den`` hold per-step compensator increments, with
    shape (horizon,) for one mark or (horizon, marks). ``n`` holds the counting
    increments, 0 or 1, in the same shape. Each step contributes
    lambda_h / lambda0_h when mark h jumps and (1 - sum lambda) / (1 - sum lambda0)
    when nothing jumps.
    An increment of exactly 0 or 1 is accepted only when the other side has the
    same value, so a certain jump that occurs contributes 1.
    """
    lam = np.atleast_2d(np.asarray(lambda_num, dtype=float).T).T
    lam0 = np.atleast_2d(np.asarray(lambda_den, dtype=float).T).T
    jumps = np.atleast_2d(np.asarray(n).T).T
    if lam.shape != lam0.shape or lam.shape != jumps.shape:
        raise ValueError(f"shape mismatch: {lam.shape}, {lam0.shape}, {jumps.shape}")
    if not np.all(np.isin(jumps, (0, 1))):
        raise ValueError("counting increments must be 0 or 1")

    factors: list[float] = []
    for t, (row, row0, dn) in enumerate(zip(lam, lam0, jumps), start=1):
        if dn.sum() > 1:
            raise SimultaneousJumpsError(f"simultaneous jumps unsupported (t={t})")
        for a, b in zip(row, row0):
            _check_increment(a, b, t)
            _check_increment(b, a, t)
        total, total0 = math.fsum(row), math.fsum(row0)
        if total > 1.0 + SUM_TOL or total0 > 1.0 + SUM_TOL:
            raise InvalidCompensatorIncrementError(
                f"invalid compensator increment: jump probabilities sum past 1 at t={t}"
            )
        if dn.any():
            h = int(np.argmax(dn))
            num_f, den_f = row[h], row0[h]
        else:
            num_f, den_f = 1.0 - total, 1.0 - total0
        if num_f <= 0.0 or den_f <= 0.0:
            raise InvalidCompensatorIncrementError(
                f"invalid compensator increment: realized path has probability zero at t={t}"
            )
        factors.append(num_f / den_f)
    return product(factors)


def _check_times(h: HazardSpec, event_time: int | None, censor_time: int) -> None:
    if not 0 <= censor_time <= h.grid.horizon:
        raise InvalidTimesError(f"invalid times: censoring at {censor_time} is off the grid")
    if event_time is not None and not 1 <= event_time <= censor_time:
        raise InvalidTimesError(
            f"invalid times: event at {event_time} is not within 1..{censor_time}"
        )


def survival_lr(
    h: HazardSpec, event_time: int | None, censor_time: int, theta: Any, theta0: Any
) -> float:
    """Hazard-product likelihood ratio of a possibly right-censored event time."""
    _check_times(h, event_time, censor_time)
    last = censor_time if event_time is None else event_time - 1
    factors = [(1.0 - h.at(theta, t)) / (1.0 - h.at(theta0, t)) for t in range(1, last + 1)]
    if event_time is not None:
        factors.append(h.at(theta, event_time) / h.at(theta0, event_time))
    return product(factors)


def survival_counting_setup(
    h: HazardSpec, event_time: int | None, censor_time: int, theta: Any, theta0: Any
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Compensator increments and counting path equivalent to a survival observation."""
    _check_times(h, event_time, censor_time)
    last = censor_time if event_time is None else event_time
    times = range(1, last + 1)
    lam = np.array([h.at(theta, t) for t in times])
    lam0 = np.array([h.at(theta0, t) for t in times])
    n = np.zeros(last, dtype=int)
    if event_time is not None:
        n[event_time - 1] = 1
    return lam, lam0, n


def all_observations(model: JointModel) -> list[Observation]:
    """Distinct observations of the support, in path order."""
    return list(dict.fromkeys(observe(p, model.r_dim) for p in model.space.paths))
